#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "portmon/ingest.hpp"
#include "portmon/trigger.hpp"

namespace portmon::analysis {

struct AxisStats {
  double mean_mg = 0.0;
  double peak_mg = 0.0;  // max |value - mean|
  double rmse_mg = 0.0;  // mean-removed RMS
};

struct SessionAnalysis {
  std::string session_id;
  double start_t = 0.0;
  trigger::TriggerKind trigger_kind = trigger::TriggerKind::Schedule;
  bool ship_present = false;
  double temperature_c = 0.0;
  std::size_t rows = 0;
  std::size_t analyzed_rows = 0;  // after the filter warmup skip
  AxisStats ax, ay, az;
  double roll_min_deg = 0.0, roll_max_deg = 0.0, roll_mean_deg = 0.0, roll_rmse_deg = 0.0;
  double pitch_min_deg = 0.0, pitch_max_deg = 0.0, pitch_mean_deg = 0.0, pitch_rmse_deg = 0.0;
};

struct AnalysisReport {
  std::string sensor_id;
  std::vector<SessionAnalysis> sessions;
  // Aggregates over sessions.
  double peak_ax_mg = 0.0, peak_ay_mg = 0.0, peak_az_mg = 0.0;
  double pitch_range_deg = 0.0;  // spread of per-session mean pitch
  double roll_range_deg = 0.0;
  double corr_pitch_temp = 0.0;
  double corr_roll_temp_above_knee = 0.0;  // only sessions warmer than the knee
};

// The first rows of every session pass through a freshly primed filter
// chain; they are excluded from peaks, noise, and tilt statistics.
AnalysisReport analyze_store(const ingest::SeriesStore& store, const std::string& sensor_id);

// Writes report.json, sessions.csv, and tilt_vs_temperature.csv.
void write_report(const AnalysisReport& report, const std::string& out_dir);

double pearson(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace portmon::analysis
