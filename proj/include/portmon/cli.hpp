#pragma once

#include <cstdint>
#include <optional>
#include <string>

namespace portmon::cli {

// Each command takes a plain argument struct and returns a process exit
// code, so tests can drive them without spawning the binary. Diagnostics go
// to stderr; result summaries go to stdout.

struct SimulateArgs {
  std::string scenario_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;  // overrides the scenario's seed
};

struct RunArgs {
  std::string scenario_path;
  std::string out_dir;
  int sensors = 1;
  double loss = 0.0;
  std::optional<std::uint64_t> seed;
  bool bulk = true;
  std::string broker;       // "host[:port]"; empty keeps the in-process transport
  std::string noise_path;   // detector noise config; empty means a perfect detector
};

struct AnalyzeArgs {
  std::string store_dir;
  std::string sensor_id = "1";
  std::string out_dir;
};

struct EvalDetectionArgs {
  std::string dataset_dir;
  std::string noise_path;  // empty means a perfect detector
  std::string out_dir = ".";
};

struct ExportFirArgs {
  int taps = 128;
  double cutoff_hz = 110.0;
  double sample_rate_hz = 1000.0;
  std::string out_path;
};

// Writes the world's ground truth: processed 100 Hz rows, 1 Hz distance /
// temperature / scene tracks, per-arrival scene documents, and summary.json.
int cmd_simulate(const SimulateArgs& args);

// Full end-to-end run (world, nodes, transport, ingest service in one
// process), then a per-sensor analysis report.
int cmd_run(const RunArgs& args);

int cmd_analyze(const AnalyzeArgs& args);

int cmd_eval_detection(const EvalDetectionArgs& args);

int cmd_export_fir(const ExportFirArgs& args);

// Parses argv and dispatches to the commands above.
int run_cli(int argc, const char* const* argv);

}  // namespace portmon::cli
