#include "portmon/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "portmon/sim.hpp"
#include "portmon/telemetry.hpp"
#include "portmon/util.hpp"

namespace portmon::analysis {

namespace {

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / double(v.size());
}

AxisStats axis_stats(const std::vector<double>& v) {
  AxisStats st;
  if (v.empty()) return st;
  st.mean_mg = mean_of(v);
  double sq = 0.0;
  for (double x : v) {
    const double d = x - st.mean_mg;
    st.peak_mg = std::max(st.peak_mg, std::abs(d));
    sq += d * d;
  }
  st.rmse_mg = std::sqrt(sq / double(v.size()));
  return st;
}

double rmse_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  const double m = mean_of(v);
  double sq = 0.0;
  for (double x : v) sq += (x - m) * (x - m);
  return std::sqrt(sq / double(v.size()));
}

}  // namespace

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) return 0.0;
  const double ma = mean_of(a);
  const double mb = mean_of(b);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa <= 0.0 || sbb <= 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

AnalysisReport analyze_store(const ingest::SeriesStore& store, const std::string& sensor_id) {
  AnalysisReport report;
  report.sensor_id = sensor_id;

  for (const std::string& ses_id : store.session_ids(sensor_id)) {
    const std::vector<telemetry::Row> rows = store.session_rows(sensor_id, ses_id);
    SessionAnalysis sa;
    sa.session_id = ses_id;
    sa.rows = rows.size();
    if (const auto info = store.session_info(sensor_id, ses_id)) {
      sa.start_t = info->trigger_time;
      sa.trigger_kind = info->trigger_type;
      sa.ship_present = info->ship_present;
      sa.temperature_c = info->temperature_c;
    } else if (!rows.empty()) {
      sa.start_t = rows.front().t;
    }

    std::vector<double> ax, ay, az, roll, pitch;
    for (std::size_t i = std::size_t(sim::kWarmupRows); i < rows.size(); ++i) {
      ax.push_back(rows[i].ax_mg);
      ay.push_back(rows[i].ay_mg);
      az.push_back(rows[i].az_mg);
      roll.push_back(rows[i].roll_deg);
      pitch.push_back(rows[i].pitch_deg);
    }
    sa.analyzed_rows = ax.size();
    sa.ax = axis_stats(ax);
    sa.ay = axis_stats(ay);
    sa.az = axis_stats(az);
    if (!roll.empty()) {
      sa.roll_min_deg = *std::min_element(roll.begin(), roll.end());
      sa.roll_max_deg = *std::max_element(roll.begin(), roll.end());
      sa.roll_mean_deg = mean_of(roll);
      sa.roll_rmse_deg = rmse_of(roll);
      sa.pitch_min_deg = *std::min_element(pitch.begin(), pitch.end());
      sa.pitch_max_deg = *std::max_element(pitch.begin(), pitch.end());
      sa.pitch_mean_deg = mean_of(pitch);
      sa.pitch_rmse_deg = rmse_of(pitch);
    }
    report.sessions.push_back(std::move(sa));
  }

  std::vector<double> temps, pitch_means, roll_means;
  std::vector<double> temps_above, roll_above;
  double pitch_lo = std::numeric_limits<double>::infinity();
  double pitch_hi = -pitch_lo;
  double roll_lo = pitch_lo;
  double roll_hi = -pitch_lo;
  for (const SessionAnalysis& sa : report.sessions) {
    if (sa.analyzed_rows == 0) continue;
    report.peak_ax_mg = std::max(report.peak_ax_mg, sa.ax.peak_mg);
    report.peak_ay_mg = std::max(report.peak_ay_mg, sa.ay.peak_mg);
    report.peak_az_mg = std::max(report.peak_az_mg, sa.az.peak_mg);
    temps.push_back(sa.temperature_c);
    pitch_means.push_back(sa.pitch_mean_deg);
    roll_means.push_back(sa.roll_mean_deg);
    pitch_lo = std::min(pitch_lo, sa.pitch_mean_deg);
    pitch_hi = std::max(pitch_hi, sa.pitch_mean_deg);
    roll_lo = std::min(roll_lo, sa.roll_mean_deg);
    roll_hi = std::max(roll_hi, sa.roll_mean_deg);
    if (sa.temperature_c > sim::kRollKneeC) {
      temps_above.push_back(sa.temperature_c);
      roll_above.push_back(sa.roll_mean_deg);
    }
  }
  if (!pitch_means.empty()) {
    report.pitch_range_deg = pitch_hi - pitch_lo;
    report.roll_range_deg = roll_hi - roll_lo;
    report.corr_pitch_temp = pearson(pitch_means, temps);
    report.corr_roll_temp_above_knee = pearson(roll_above, temps_above);
  }
  return report;
}

void write_report(const AnalysisReport& report, const std::string& out_dir) {
  util::ensure_dir(out_dir);

  std::string s = "{\"sensor_id\":\"";
  s += util::json_escape(report.sensor_id);
  s += "\",\"session_count\":";
  s += std::to_string(report.sessions.size());
  s += ",\"peak_ax_mg\":";
  s += util::fmt_fixed(report.peak_ax_mg, 6);
  s += ",\"peak_ay_mg\":";
  s += util::fmt_fixed(report.peak_ay_mg, 6);
  s += ",\"peak_az_mg\":";
  s += util::fmt_fixed(report.peak_az_mg, 6);
  s += ",\"pitch_range_deg\":";
  s += util::fmt_fixed(report.pitch_range_deg, 6);
  s += ",\"roll_range_deg\":";
  s += util::fmt_fixed(report.roll_range_deg, 6);
  s += ",\"corr_pitch_temp\":";
  s += util::fmt_fixed(report.corr_pitch_temp, 6);
  s += ",\"corr_roll_temp_above_knee\":";
  s += util::fmt_fixed(report.corr_roll_temp_above_knee, 6);
  s += ",\"sessions\":[";
  for (std::size_t i = 0; i < report.sessions.size(); ++i) {
    const SessionAnalysis& sa = report.sessions[i];
    if (i) s += ',';
    s += "{\"session_id\":\"";
    s += util::json_escape(sa.session_id);
    s += "\",\"start_t\":";
    s += util::fmt_fixed(sa.start_t, 3);
    s += ",\"trigger\":\"";
    s += trigger::kind_name(sa.trigger_kind);
    s += "\",\"ship_present\":";
    s += sa.ship_present ? "true" : "false";
    s += ",\"temperature_c\":";
    s += util::fmt_fixed(sa.temperature_c, 3);
    s += ",\"rows\":";
    s += std::to_string(sa.rows);
    s += ",\"analyzed_rows\":";
    s += std::to_string(sa.analyzed_rows);
    s += ",\"peak_ax_mg\":";
    s += util::fmt_fixed(sa.ax.peak_mg, 6);
    s += ",\"peak_ay_mg\":";
    s += util::fmt_fixed(sa.ay.peak_mg, 6);
    s += ",\"peak_az_mg\":";
    s += util::fmt_fixed(sa.az.peak_mg, 6);
    s += ",\"rmse_ax_mg\":";
    s += util::fmt_fixed(sa.ax.rmse_mg, 6);
    s += ",\"rmse_ay_mg\":";
    s += util::fmt_fixed(sa.ay.rmse_mg, 6);
    s += ",\"rmse_az_mg\":";
    s += util::fmt_fixed(sa.az.rmse_mg, 6);
    s += ",\"roll_min_deg\":";
    s += util::fmt_fixed(sa.roll_min_deg, 6);
    s += ",\"roll_max_deg\":";
    s += util::fmt_fixed(sa.roll_max_deg, 6);
    s += ",\"roll_mean_deg\":";
    s += util::fmt_fixed(sa.roll_mean_deg, 6);
    s += ",\"roll_rmse_deg\":";
    s += util::fmt_fixed(sa.roll_rmse_deg, 6);
    s += ",\"pitch_min_deg\":";
    s += util::fmt_fixed(sa.pitch_min_deg, 6);
    s += ",\"pitch_max_deg\":";
    s += util::fmt_fixed(sa.pitch_max_deg, 6);
    s += ",\"pitch_mean_deg\":";
    s += util::fmt_fixed(sa.pitch_mean_deg, 6);
    s += ",\"pitch_rmse_deg\":";
    s += util::fmt_fixed(sa.pitch_rmse_deg, 6);
    s += '}';
  }
  s += "]}\n";
  util::write_text_file(out_dir + "/report.json", s);

  std::string sessions_csv =
      "session_id,start_t,trigger,ship_present,temperature_c,rows,analyzed_rows,"
      "peak_ax_mg,peak_ay_mg,peak_az_mg,rmse_ax_mg,rmse_ay_mg,rmse_az_mg,"
      "roll_min_deg,roll_max_deg,pitch_min_deg,pitch_max_deg\n";
  for (const SessionAnalysis& sa : report.sessions) {
    sessions_csv += sa.session_id;
    sessions_csv += ',';
    sessions_csv += util::fmt_fixed(sa.start_t, 3);
    sessions_csv += ',';
    sessions_csv += trigger::kind_name(sa.trigger_kind);
    sessions_csv += ',';
    sessions_csv += sa.ship_present ? "1" : "0";
    sessions_csv += ',';
    sessions_csv += util::fmt_fixed(sa.temperature_c, 3);
    sessions_csv += ',';
    sessions_csv += std::to_string(sa.rows);
    sessions_csv += ',';
    sessions_csv += std::to_string(sa.analyzed_rows);
    for (const AxisStats* st : {&sa.ax, &sa.ay, &sa.az}) {
      sessions_csv += ',';
      sessions_csv += util::fmt_fixed(st->peak_mg, 6);
    }
    for (const AxisStats* st : {&sa.ax, &sa.ay, &sa.az}) {
      sessions_csv += ',';
      sessions_csv += util::fmt_fixed(st->rmse_mg, 6);
    }
    sessions_csv += ',';
    sessions_csv += util::fmt_fixed(sa.roll_min_deg, 6);
    sessions_csv += ',';
    sessions_csv += util::fmt_fixed(sa.roll_max_deg, 6);
    sessions_csv += ',';
    sessions_csv += util::fmt_fixed(sa.pitch_min_deg, 6);
    sessions_csv += ',';
    sessions_csv += util::fmt_fixed(sa.pitch_max_deg, 6);
    sessions_csv += '\n';
  }
  util::write_text_file(out_dir + "/sessions.csv", sessions_csv);

  std::string tilt_csv = "t,temp_c,roll_deg,pitch_deg\n";
  for (const SessionAnalysis& sa : report.sessions) {
    if (sa.analyzed_rows == 0) continue;
    tilt_csv += util::fmt_fixed(sa.start_t, 3);
    tilt_csv += ',';
    tilt_csv += util::fmt_fixed(sa.temperature_c, 3);
    tilt_csv += ',';
    tilt_csv += util::fmt_fixed(sa.roll_mean_deg, 6);
    tilt_csv += ',';
    tilt_csv += util::fmt_fixed(sa.pitch_mean_deg, 6);
    tilt_csv += '\n';
  }
  util::write_text_file(out_dir + "/tilt_vs_temperature.csv", tilt_csv);
}

}  // namespace portmon::analysis
