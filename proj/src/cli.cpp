#include <portmon/cli.hpp>

#include <cstdio>
#include <exception>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <portmon/analysis.hpp>
#include <portmon/detection.hpp>
#include <portmon/dsp.hpp>
#include <portmon/ingest.hpp>
#include <portmon/mqtt.hpp>
#include <portmon/run.hpp>
#include <portmon/sim.hpp>
#include <portmon/telemetry.hpp>
#include <portmon/util.hpp>

namespace portmon::cli {

namespace {

int fail(const std::string& message) {
  std::fprintf(stderr, "error: %s\n", message.c_str());
  return 1;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  return out;
}

}  // namespace

int cmd_simulate(const SimulateArgs& args) {
  try {
    sim::Scenario scenario = sim::load_scenario(args.scenario_path);
    if (args.seed) scenario.seed = *args.seed;
    const sim::World world(scenario);
    util::ensure_dir(args.out_dir);

    // Processed 100 Hz rows over the whole scenario, single reference sensor.
    {
      std::ofstream out = open_out(args.out_dir + "/rows.csv");
      out << telemetry::csv_header() << "\n";
      const sim::SensorNoise noise = world.sensor_noise("1");
      dsp::FirDecimator chain(dsp::design_kaiser_fir(128, 110.0, 1000.0), 10);
      dsp::TiltLowpass tilt_lpf(1.0, 100.0);
      const std::int64_t n = static_cast<std::int64_t>(scenario.duration_s * 1000.0);
      for (std::int64_t i = 0; i < n; ++i) {
        const auto emitted = chain.push(world.accel_at(noise, i));
        if (!emitted) continue;
        const dsp::TiltSample tilt = tilt_lpf.push(dsp::estimate_tilt(*emitted));
        telemetry::Row row;
        row.t = emitted->t;
        row.ax_mg = emitted->ax * 1000.0;
        row.ay_mg = emitted->ay * 1000.0;
        row.az_mg = emitted->az * 1000.0;
        row.roll_deg = tilt.roll_deg;
        row.pitch_deg = tilt.pitch_deg;
        out << telemetry::row_text(row) << "\n";
      }
    }

    const auto whole_seconds = static_cast<std::int64_t>(scenario.duration_s);
    {
      std::ofstream out = open_out(args.out_dir + "/distance.csv");
      out << "t,distance_m\n";
      for (std::int64_t t = 0; t < whole_seconds; ++t) {
        out << util::fmt_fixed(static_cast<double>(t), 3) << ","
            << util::fmt_fixed(world.distance_at(static_cast<double>(t)), 3) << "\n";
      }
    }
    {
      std::ofstream out = open_out(args.out_dir + "/temperature.csv");
      out << "t,temp_c\n";
      for (std::int64_t t = 0; t < whole_seconds; ++t) {
        out << util::fmt_fixed(static_cast<double>(t), 3) << ","
            << util::fmt_fixed(world.temperature_at(static_cast<double>(t)), 3) << "\n";
      }
    }

    const detection::BerthingGate gate =
        detection::default_gate(sim::kFrameSizePx, sim::kFrameSizePx);
    std::int64_t berthing_episodes = 0;
    {
      std::ofstream out = open_out(args.out_dir + "/scenes.csv");
      out << "t,boxes,berthing\n";
      bool prev = false;
      for (std::int64_t t = 0; t < whole_seconds; ++t) {
        const auto scene = world.scene_at(static_cast<double>(t), "truth");
        const bool berthing = world.berthing_truth(static_cast<double>(t), gate);
        if (berthing && !prev) ++berthing_episodes;
        prev = berthing;
        out << util::fmt_fixed(static_cast<double>(t), 3) << "," << scene.boxes.size() << ","
            << (berthing ? 1 : 0) << "\n";
      }
    }

    // One scene document per ship, captured at its closest approach.
    for (std::size_t k = 0; k < scenario.ships.size(); ++k) {
      const double t = scenario.ships[k].arrival_t();
      const auto scene = world.scene_at(t, "arrival_" + std::to_string(k + 1));
      util::write_text_file(args.out_dir + "/scenes/arrival_" + std::to_string(k + 1) + ".json",
                            detection::scene_to_json(scene) + "\n");
    }

    std::string summary = "{\"scenario\":\"" + util::json_escape(scenario.name) +
                          "\",\"seed\":" + std::to_string(scenario.seed) +
                          ",\"duration_s\":" + util::fmt_fixed(scenario.duration_s, 3) +
                          ",\"berthing_episodes\":" + std::to_string(berthing_episodes) +
                          ",\"ships\":[";
    for (std::size_t k = 0; k < scenario.ships.size(); ++k) {
      const sim::ShipEvent& ship = scenario.ships[k];
      if (k) summary += ',';
      summary += "{\"appear_t\":" + util::fmt_fixed(ship.appear_t, 3) +
                 ",\"arrival_t\":" + util::fmt_fixed(ship.arrival_t(), 3) +
                 ",\"departs_t\":" + util::fmt_fixed(ship.departs_t, 3) +
                 ",\"passing\":" + (ship.passing ? "true" : "false") +
                 ",\"berthing_at_arrival\":" +
                 (world.berthing_truth(ship.arrival_t(), gate) ? "true" : "false") + "}";
    }
    summary += "]}\n";
    util::write_text_file(args.out_dir + "/summary.json", summary);

    std::printf("simulated %s: %.0f s, %zu ships, %lld berthing episodes\n",
                scenario.name.c_str(), scenario.duration_s, scenario.ships.size(),
                static_cast<long long>(berthing_episodes));
    return 0;
  } catch (const std::exception& e) {
    return fail(e.what());
  }
}

int cmd_run(const RunArgs& args) {
  try {
    run::RunOptions options;
    options.scenario = sim::load_scenario(args.scenario_path);
    if (args.seed) options.scenario.seed = *args.seed;
    options.n_sensors = args.sensors;
    options.loss_rate = args.loss;
    options.out_dir = args.out_dir;
    options.bulk_enabled = args.bulk;
    if (!args.noise_path.empty()) options.detector = detection::load_noise_config(args.noise_path);

    std::unique_ptr<mqtt::MqttClient> broker_client;
    if (!args.broker.empty()) {
      const auto [host, port] = mqtt::parse_broker_url(args.broker);
      broker_client = mqtt::MqttClient::connect(host, port, "portmon-run");
      if (!broker_client) return fail("cannot connect to broker " + args.broker);
      options.external_transport = broker_client.get();
    }

    run::Engine engine(std::move(options));
    const run::RunResult result = engine.execute();

    std::size_t total_sessions = 0;
    for (const auto& sensor : result.sensors) {
      total_sessions += sensor.sessions.size();
      const analysis::AnalysisReport report =
          analysis::analyze_store(engine.service().store(), sensor.sensor_id);
      analysis::write_report(report, args.out_dir + "/analysis/sensor" + sensor.sensor_id);
    }
    if (broker_client) broker_client->disconnect();

    std::printf("run complete: %zu sensors, %zu sessions, %zu published, %zu dropped\n",
                result.sensors.size(), total_sessions, result.published_messages,
                result.dropped_messages);
    return 0;
  } catch (const std::exception& e) {
    return fail(e.what());
  }
}

int cmd_analyze(const AnalyzeArgs& args) {
  try {
    const ingest::SeriesStore store(args.store_dir);
    const analysis::AnalysisReport report = analysis::analyze_store(store, args.sensor_id);
    analysis::write_report(report, args.out_dir);
    std::printf("sensor %s: %zu sessions, peaks (mg) x=%.3f y=%.3f z=%.3f\n",
                report.sensor_id.c_str(), report.sessions.size(), report.peak_ax_mg,
                report.peak_ay_mg, report.peak_az_mg);
    return 0;
  } catch (const std::exception& e) {
    return fail(e.what());
  }
}

int cmd_eval_detection(const EvalDetectionArgs& args) {
  try {
    const std::vector<detection::AnnotationScene> dataset =
        detection::load_dataset(args.dataset_dir);
    detection::DetectorNoiseConfig noise;
    if (!args.noise_path.empty()) noise = detection::load_noise_config(args.noise_path);

    std::vector<detection::SceneResult> results;
    results.reserve(dataset.size());
    for (const auto& scene : dataset) {
      results.push_back({scene.scene_id, detection::detect(scene, noise), scene.boxes});
    }
    const detection::ApResult ap = detection::average_precision(results, 0.5);

    util::ensure_dir(args.out_dir);
    std::string sweep = "threshold,precision,recall\n";
    for (const auto& p : ap.curve) {
      sweep += util::fmt_fixed(p.threshold, 6) + "," + util::fmt_fixed(p.precision, 6) + "," +
               util::fmt_fixed(p.recall, 6) + "\n";
    }
    util::write_text_file(args.out_dir + "/pr_sweep.csv", sweep);
    util::write_text_file(
        args.out_dir + "/eval.json",
        "{\"ap\":" + util::fmt_fixed(ap.ap, 6) + ",\"scenes\":" + std::to_string(dataset.size()) +
            ",\"ground_truth\":" + std::to_string(ap.ground_truth_count) +
            ",\"true_positives\":" + std::to_string(ap.true_positives) +
            ",\"false_positives\":" + std::to_string(ap.false_positives) + "}\n");

    std::printf("AP@0.5 = %.4f over %zu scenes (%zu ground-truth boxes)\n", ap.ap, dataset.size(),
                ap.ground_truth_count);
    return 0;
  } catch (const std::exception& e) {
    return fail(e.what());
  }
}

int cmd_export_fir(const ExportFirArgs& args) {
  try {
    const dsp::FirSpec fir =
        dsp::design_kaiser_fir(args.taps, args.cutoff_hz, args.sample_rate_hz);
    dsp::write_coefficients(args.out_path, fir);
    std::printf("wrote %d taps to %s\n", args.taps, args.out_path.c_str());
    return 0;
  } catch (const std::exception& e) {
    return fail(e.what());
  }
}

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"port berthing monitor: simulation, pipeline runs, analysis"};
  app.require_subcommand(1);

  SimulateArgs sim_args;
  CLI::App* sim_cmd = app.add_subcommand("simulate", "write a scenario's ground truth");
  sim_cmd->add_option("--scenario", sim_args.scenario_path, "scenario JSON file")->required();
  sim_cmd->add_option("--out", sim_args.out_dir, "output directory")->required();
  sim_cmd->add_option("--seed", sim_args.seed, "override the scenario seed");

  RunArgs run_args;
  CLI::App* run_cmd = app.add_subcommand("run", "end-to-end simulated deployment");
  run_cmd->add_option("--scenario", run_args.scenario_path, "scenario JSON file")->required();
  run_cmd->add_option("--out", run_args.out_dir, "output directory")->required();
  run_cmd->add_option("--sensors", run_args.sensors, "number of sensor nodes");
  run_cmd->add_option("--loss", run_args.loss, "transport loss rate in [0,1)");
  run_cmd->add_option("--seed", run_args.seed, "override the scenario seed");
  run_cmd->add_flag("--bulk,!--no-bulk", run_args.bulk, "enable the bulk upload path");
  run_cmd->add_option("--broker", run_args.broker, "external broker host[:port]");
  run_cmd->add_option("--noise", run_args.noise_path, "detector noise config JSON");

  AnalyzeArgs an_args;
  CLI::App* an_cmd = app.add_subcommand("analyze", "report on a populated series store");
  an_cmd->add_option("--store", an_args.store_dir, "series store directory")->required();
  an_cmd->add_option("--sensor", an_args.sensor_id, "sensor id (default 1)");
  an_cmd->add_option("--out", an_args.out_dir, "output directory")->required();

  EvalDetectionArgs ev_args;
  CLI::App* ev_cmd = app.add_subcommand("eval-detection", "AP and PR sweep on a dataset");
  ev_cmd->add_option("--dataset", ev_args.dataset_dir, "dataset directory")->required();
  ev_cmd->add_option("--noise", ev_args.noise_path, "detector noise config JSON");
  ev_cmd->add_option("--out", ev_args.out_dir, "output directory (default .)");

  ExportFirArgs fir_args;
  CLI::App* fir_cmd = app.add_subcommand("export-fir", "write filter coefficients");
  fir_cmd->add_option("--taps", fir_args.taps, "tap count");
  fir_cmd->add_option("--cutoff", fir_args.cutoff_hz, "cutoff frequency, Hz");
  fir_cmd->add_option("--rate", fir_args.sample_rate_hz, "sample rate, Hz");
  fir_cmd->add_option("--out", fir_args.out_path, "coefficient file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  if (sim_cmd->parsed()) return cmd_simulate(sim_args);
  if (run_cmd->parsed()) return cmd_run(run_args);
  if (an_cmd->parsed()) return cmd_analyze(an_args);
  if (ev_cmd->parsed()) return cmd_eval_detection(ev_args);
  if (fir_cmd->parsed()) return cmd_export_fir(fir_args);
  return fail("no command selected");
}

}  // namespace portmon::cli
