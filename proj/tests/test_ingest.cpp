#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <portmon/detection.hpp>
#include <portmon/ingest.hpp>
#include <portmon/telemetry.hpp>
#include <portmon/util.hpp>

#include "support/tmpdir.hpp"

using namespace portmon;
using telemetry::DataPacket;
using telemetry::Row;

namespace {

Row make_row(double t) {
  Row r;
  r.t = t;
  r.ax_mg = 1.0;
  r.ay_mg = 2.0;
  r.az_mg = 1000.0;
  r.roll_deg = 0.0;
  r.pitch_deg = 0.0;
  return r;
}

DataPacket make_packet(const std::string& sensor, const std::string& session, std::uint64_t seq,
                       double t0, int n = 5, bool final_flag = false) {
  DataPacket p;
  p.sensor_id = sensor;
  p.session_id = session;
  p.seq = seq;
  p.final_flag = final_flag;
  for (int i = 0; i < n; ++i) p.rows.push_back(make_row(t0 + i * 0.01));
  return p;
}

std::string make_csv(double t0, int n) {
  std::vector<Row> rows;
  for (int i = 0; i < n; ++i) rows.push_back(make_row(t0 + i * 0.01));
  return telemetry::rows_to_csv(rows);
}

telemetry::InfoRecord make_info(const std::string& sensor, const std::string& session,
                                double trigger_t, bool ship) {
  telemetry::InfoRecord info;
  info.sensor_id = sensor;
  info.session_id = session;
  info.trigger_time = trigger_t;
  info.distance_m = 40.0;
  info.temperature_c = 19.5;
  info.trigger_type = ship ? trigger::TriggerKind::Rangefinder : trigger::TriggerKind::Schedule;
  info.ship_present = ship;
  return info;
}

detection::AnnotationScene berth_scene(const std::string& id) {
  detection::AnnotationScene scene;
  scene.scene_id = id;
  scene.width = 1024.0;
  scene.height = 1024.0;
  scene.boxes.push_back({300.0, 500.0, 800.0, 700.0});
  scene.labels.push_back("Ship");
  return scene;
}

}  // namespace

TEST_CASE("streamed packets accumulate and duplicates are dropped") {
  testsup::TmpDir tmp("store");
  ingest::SeriesStore store(tmp.str());
  CHECK(store.append_streamed(make_packet("1", "s", 0, 0.0)));
  CHECK(store.append_streamed(make_packet("1", "s", 1, 0.05)));
  CHECK(!store.append_streamed(make_packet("1", "s", 0, 0.0)));

  const auto rows = store.session_rows("1", "s");
  REQUIRE(rows.size() == 10);
  for (std::size_t i = 1; i < rows.size(); ++i) CHECK(rows[i].t > rows[i - 1].t);

  const auto stats = store.session_stats("1", "s");
  CHECK(stats.streamed_packets == 2);
  CHECK(stats.duplicate_packets == 1);
  CHECK(!stats.bulk_present);
  CHECK(stats.row_count == 10);
}

TEST_CASE("info records are write-once per session") {
  testsup::TmpDir tmp("store");
  ingest::SeriesStore store(tmp.str());
  CHECK(store.append_info(make_info("1", "s", 10.0, true)));
  CHECK(!store.append_info(make_info("1", "s", 99.0, false)));
  const auto info = store.session_info("1", "s");
  REQUIRE(info.has_value());
  CHECK(info->trigger_time == 10.0);
  CHECK(!store.session_info("1", "other").has_value());
}

TEST_CASE("bulk rows supersede streamed rows in every query") {
  testsup::TmpDir tmp("store");
  ingest::SeriesStore store(tmp.str());
  store.append_streamed(make_packet("1", "s", 0, 0.0));
  store.finalize_bulk("1", "s", true, make_csv(0.0, 15), std::nullopt);

  CHECK(store.session_rows("1", "s").size() == 15);
  const auto stats = store.session_stats("1", "s");
  CHECK(stats.bulk_present);
  CHECK(stats.row_count == 15);
  CHECK(store.query_series("1", 0.0, 1.0).size() == 15);
}

TEST_CASE("bulk files are stored verbatim and repeats are idempotent") {
  testsup::TmpDir tmp("store");
  ingest::SeriesStore store(tmp.str());
  const std::string csv = make_csv(5.0, 8);
  store.finalize_bulk("2", "ses", false, csv, std::string("{\"scene_id\":\"x\"}"));
  store.finalize_bulk("2", "ses", false, csv, std::nullopt);
  store.flush();

  const std::string path = store.bulk_csv_path("2", "ses", false);
  CHECK(util::read_text_file(path) == csv);
  CHECK(util::read_text_file(tmp.str() + "/bulk/noship/sensor2/ses.scene.json") ==
        "{\"scene_id\":\"x\"}");

  // The identical repeat must not log a second finalize marker.
  const std::string log = util::read_text_file(tmp.str() + "/sensor2/series.log");
  std::size_t markers = 0;
  for (const std::string& line : util::split(log, '\n')) {
    if (line.rfind("F|", 0) == 0) ++markers;
  }
  CHECK(markers == 1);

  // Replacing the content is allowed and logs again.
  store.finalize_bulk("2", "ses", false, make_csv(5.0, 9), std::nullopt);
  CHECK(store.session_rows("2", "ses").size() == 9);
}

TEST_CASE("malformed bulk uploads are rejected before touching state") {
  testsup::TmpDir tmp("store");
  ingest::SeriesStore store(tmp.str());
  CHECK_THROWS_AS(store.finalize_bulk("1", "s", true, "not a csv", std::nullopt),
                  std::invalid_argument);
  CHECK(!store.session_stats("1", "s").bulk_present);
}

TEST_CASE("sessions list in chronological order regardless of arrival") {
  testsup::TmpDir tmp("store");
  ingest::SeriesStore store(tmp.str());
  store.append_streamed(make_packet("1", "late", 0, 100.0, 3, true));
  store.append_streamed(make_packet("1", "early", 0, 50.0, 3, true));
  const auto ids = store.session_ids("1");
  REQUIRE(ids.size() == 2);
  CHECK(ids[0] == "early");
  CHECK(ids[1] == "late");
}

TEST_CASE("series queries cover a half-open time window across sessions") {
  testsup::TmpDir tmp("store");
  ingest::SeriesStore store(tmp.str());
  store.append_streamed(make_packet("1", "a", 0, 1.0));   // t = 1.00 .. 1.04
  store.append_streamed(make_packet("1", "b", 0, 2.0));   // t = 2.00 .. 2.04
  const auto rows = store.query_series("1", 1.02, 2.02);
  REQUIRE(rows.size() == 5);
  CHECK(rows.front().t == 1.02);
  CHECK(rows.back().t == 2.01);
  for (std::size_t i = 1; i < rows.size(); ++i) CHECK(rows[i].t > rows[i - 1].t);
}

TEST_CASE("info queries filter on the trigger time") {
  testsup::TmpDir tmp("store");
  ingest::SeriesStore store(tmp.str());
  store.append_info(make_info("1", "a", 10.0, false));
  store.append_info(make_info("1", "b", 20.0, true));
  store.append_info(make_info("1", "c", 30.0, false));
  const auto infos = store.query_info("1", 10.0, 30.0);
  REQUIRE(infos.size() == 2);
  CHECK(infos[0].session_id == "a");
  CHECK(infos[1].session_id == "b");
}

TEST_CASE("missing sequence ranges are reported inclusively") {
  testsup::TmpDir tmp("store");
  ingest::SeriesStore store(tmp.str());

  SUBCASE("stream-only horizon comes from the highest seen seq") {
    store.append_streamed(make_packet("1", "s", 0, 0.0));
    store.append_streamed(make_packet("1", "s", 3, 0.15));
    store.append_streamed(make_packet("1", "s", 4, 0.20, 2, true));
    const auto stats = store.session_stats("1", "s");
    REQUIRE(stats.missing_seq_ranges.size() == 1);
    CHECK(stats.missing_seq_ranges[0] == std::make_pair(std::uint64_t{1}, std::uint64_t{2}));
  }
  SUBCASE("bulk fixes the horizon from its row count") {
    store.append_streamed(make_packet("1", "s", 0, 0.0));
    store.append_streamed(make_packet("1", "s", 2, 0.10));
    store.finalize_bulk("1", "s", true, make_csv(0.0, 23), std::nullopt);  // 5 packets expected
    const auto stats = store.session_stats("1", "s");
    REQUIRE(stats.missing_seq_ranges.size() == 2);
    CHECK(stats.missing_seq_ranges[0] == std::make_pair(std::uint64_t{1}, std::uint64_t{1}));
    CHECK(stats.missing_seq_ranges[1] == std::make_pair(std::uint64_t{3}, std::uint64_t{4}));
  }
}

TEST_CASE("a reopened store replays its logs into identical state") {
  testsup::TmpDir tmp("store");
  {
    ingest::SeriesStore store(tmp.str());
    store.append_streamed(make_packet("1", "s", 0, 0.0));
    store.append_streamed(make_packet("1", "s", 1, 0.05, 3, true));
    store.append_info(make_info("1", "s", 0.0, true));
    store.finalize_bulk("3", "other", false, make_csv(9.0, 7), std::nullopt);
    store.flush();
  }
  ingest::SeriesStore store(tmp.str());
  CHECK(store.sensor_ids() == std::vector<std::string>{"1", "3"});

  const auto rows = store.session_rows("1", "s");
  REQUIRE(rows.size() == 8);
  CHECK(rows[0].t == 0.0);
  CHECK(rows[7].t == doctest::Approx(0.07));
  CHECK(store.session_stats("1", "s").streamed_packets == 2);

  const auto info = store.session_info("1", "s");
  REQUIRE(info.has_value());
  CHECK(info->ship_present);

  const auto other = store.session_stats("3", "other");
  CHECK(other.bulk_present);
  CHECK(other.row_count == 7);
  CHECK(store.session_rows("3", "other").size() == 7);
}

TEST_CASE("parameter maps have one canonical JSON form") {
  const std::map<std::string, double> params{{"b", 2.0}, {"a", 1.5}};
  const std::string text = ingest::params_to_json(params);
  CHECK(text == R"({"a":1.500000,"b":2.000000})");
  CHECK(ingest::params_from_json(text) == params);
  CHECK(ingest::params_to_json({}) == "{}");
}

TEST_CASE("config versions increment and updates merge") {
  testsup::TmpDir tmp("cfg");
  ingest::ConfigStore cfg(tmp.str());
  CHECK(cfg.version("7") == 0);
  CHECK(!cfg.get("7", 0).has_value());

  CHECK(cfg.set("7", {{"schedule_period_s", 600.0}}) == 1);
  CHECK(cfg.set("7", {{"cooldown_s", 90.0}}) == 2);

  const auto snap = cfg.get("7", 0);
  REQUIRE(snap.has_value());
  CHECK(snap->version == 2);
  CHECK(snap->params.at("schedule_period_s") == 600.0);
  CHECK(snap->params.at("cooldown_s") == 90.0);

  CHECK(cfg.get("7", 1).has_value());
  CHECK(!cfg.get("7", 2).has_value());  // caller is already current
}

TEST_CASE("config updates reject unknown keys and bad values atomically") {
  testsup::TmpDir tmp("cfg");
  ingest::ConfigStore cfg(tmp.str());
  cfg.set("7", {{"cooldown_s", 60.0}});
  CHECK_THROWS_AS(cfg.set("7", {{"cooldown_s", 30.0}, {"mystery", 1.0}}), std::invalid_argument);
  CHECK_THROWS_AS(cfg.set("7", {}), std::invalid_argument);
  CHECK_THROWS_AS(cfg.set("7", {{"cooldown_s", std::nan("")}}), std::invalid_argument);
  CHECK(cfg.version("7") == 1);
  CHECK(cfg.get("7", 0)->params.at("cooldown_s") == 60.0);
  CHECK(ingest::ConfigStore::known_key("gate_area_min_frac"));
  CHECK(!ingest::ConfigStore::known_key("gate"));
}

TEST_CASE("verdict audit trail keeps the latest entry per sensor") {
  testsup::TmpDir tmp("cfg");
  ingest::ConfigStore cfg(tmp.str());
  CHECK(!cfg.last_verdict("7").has_value());
  cfg.record_verdict("7", "s1", "{\"berthing\":false}");
  cfg.record_verdict("7", "s2", "{\"berthing\":true}");
  CHECK(cfg.last_verdict("7") == std::string("{\"berthing\":true}"));
}

TEST_CASE("config store persists across reopen") {
  testsup::TmpDir tmp("cfg");
  {
    ingest::ConfigStore cfg(tmp.str());
    cfg.set("7", {{"schedule_period_s", 450.0}});
    cfg.set("7", {{"schedule_period_s", 500.0}});
    cfg.record_verdict("7", "s", "{\"x\":1}");
  }
  ingest::ConfigStore cfg(tmp.str());
  CHECK(cfg.version("7") == 2);
  CHECK(cfg.get("7", 0)->params.at("schedule_period_s") == 500.0);
  CHECK(cfg.last_verdict("7") == std::string("{\"x\":1}"));
}

TEST_CASE("detection responses round-trip through their JSON form") {
  ingest::DetectionResponse r;
  r.ship_present = true;
  r.berthing = true;
  r.latency_s = 0.25;
  r.boxes.push_back({{10.0, 20.0, 110.0, 70.0}, 0.875, "Ship"});
  r.boxes.push_back({{5.0, 5.0, 15.0, 15.0}, 0.125, "Ship"});
  const std::string wire = ingest::encode_detection_response(r);
  const ingest::DetectionResponse back = ingest::decode_detection_response(wire);
  CHECK(back.ship_present == r.ship_present);
  CHECK(back.berthing == r.berthing);
  CHECK(back.latency_s == r.latency_s);
  REQUIRE(back.boxes.size() == 2);
  CHECK(back.boxes[0].score == 0.875);
  CHECK(back.boxes[1].bbox.x_max == 15.0);
  CHECK(ingest::encode_detection_response(back) == wire);
  CHECK_THROWS_AS((void)ingest::decode_detection_response("nope"), std::invalid_argument);
}

TEST_CASE("service routes transport topics into the store") {
  testsup::TmpDir tmp("svc");
  ingest::IngestService service({tmp.str(), {}});
  telemetry::LoopbackTransport transport;
  service.attach(transport);

  const DataPacket p = make_packet("4", "ses", 0, 1.0, 5, true);
  CHECK(transport.publish(telemetry::data_topic("4"), telemetry::encode_packet(p)));
  CHECK(transport.publish(telemetry::info_topic("4"),
                          telemetry::encode_info(make_info("4", "ses", 1.0, false))));
  CHECK(transport.publish(telemetry::data_topic("4"), "garbage"));

  CHECK(service.store().session_rows("4", "ses").size() == 5);
  CHECK(service.store().session_info("4", "ses").has_value());
  CHECK(service.malformed_count() == 1);
}

TEST_CASE("bulk uploads are validated against their metadata") {
  testsup::TmpDir tmp("svc");
  ingest::IngestService service({tmp.str(), {}});

  telemetry::BulkUpload good;
  good.sensor_id = "1";
  good.session_id = "s";
  good.ship_present = true;
  good.csv = make_csv(0.0, 12);
  good.expected_rows = 12;
  CHECK(service.upload(good));
  CHECK(service.store().session_stats("1", "s").bulk_present);

  telemetry::BulkUpload short_count = good;
  short_count.session_id = "s2";
  short_count.expected_rows = 13;
  CHECK(!service.upload(short_count));
  CHECK(service.rejected_uploads() == 1);

  telemetry::BulkUpload bad = good;
  bad.session_id = "s3";
  bad.csv = "nonsense";
  bad.expected_rows = 0;
  CHECK(!service.upload(bad));
  CHECK(service.rejected_uploads() == 2);
}

TEST_CASE("detection requests run the detector and audit the verdict") {
  testsup::TmpDir tmp("svc");
  detection::DetectorNoiseConfig detector;  // echo detector
  detector.latency_s = 0.35;
  ingest::IngestService service({tmp.str(), detector});

  ingest::DetectionRequest req;
  req.sensor_id = "1";
  req.session_id = "ses";
  req.scene_json = detection::scene_to_json(berth_scene("ses"));
  const ingest::DetectionResponse resp = service.handle_detection(req);
  CHECK(!resp.error);
  CHECK(resp.ship_present);
  CHECK(resp.berthing);
  CHECK(resp.latency_s == 0.35);
  REQUIRE(resp.boxes.size() == 1);
  CHECK(resp.boxes[0].score == 1.0);
  CHECK(resp.boxes[0].bbox.x_min == 300.0);

  // The audit copy keeps the verdict but sheds the box payload.
  const auto verdict = service.config().last_verdict("1");
  REQUIRE(verdict.has_value());
  const ingest::DetectionResponse audited = ingest::decode_detection_response(*verdict);
  CHECK(audited.berthing);
  CHECK(audited.boxes.empty());
}

TEST_CASE("an unreadable scene produces an error verdict") {
  testsup::TmpDir tmp("svc");
  ingest::IngestService service({tmp.str(), {}});
  const ingest::DetectionResponse resp =
      service.handle_detection({"1", "ses", "this is not a scene"});
  CHECK(resp.error);
  CHECK(!resp.ship_present);
  CHECK(!resp.berthing);
  REQUIRE(service.config().last_verdict("1").has_value());
  CHECK(ingest::decode_detection_response(*service.config().last_verdict("1")).error);
}

TEST_CASE("an empty scene is a clean no-ship verdict") {
  testsup::TmpDir tmp("svc");
  ingest::IngestService service({tmp.str(), {}});
  detection::AnnotationScene scene;
  scene.scene_id = "empty";
  const ingest::DetectionResponse resp =
      service.handle_detection({"1", "ses", detection::scene_to_json(scene)});
  CHECK(!resp.error);
  CHECK(!resp.ship_present);
  CHECK(!resp.berthing);
}

TEST_CASE("remote config reshapes the berthing gate") {
  testsup::TmpDir tmp("svc");
  ingest::IngestService service({tmp.str(), {}});

  // Default gate accepts the berth scene.
  ingest::DetectionRequest req{"1", "ses", detection::scene_to_json(berth_scene("ses"))};
  CHECK(service.handle_detection(req).berthing);

  // Raising the area floor beyond the box (9.5% of the frame) flips the verdict
  // while the detection itself still stands.
  CHECK(service.set_config("1", {{"gate_area_min_frac", 0.5}}) == 1);
  const ingest::DetectionResponse resp = service.handle_detection(req);
  CHECK(resp.ship_present);
  CHECK(!resp.berthing);

  const detection::BerthingGate gate = service.gate_for("1", 1024.0, 1024.0);
  CHECK(gate.area_min_frac == 0.5);

  // ROI fractions map into pixels against the frame.
  service.set_config("1", {{"gate_roi_y_min_frac", 0.0}});
  CHECK(service.gate_for("1", 1024.0, 1024.0).roi.y_min == 0.0);
  CHECK(service.gate_for("1", 1024.0, 1024.0).roi.x_min == doctest::Approx(102.4));

  // Other sensors keep the defaults.
  CHECK(service.gate_for("2", 1024.0, 1024.0).area_min_frac == doctest::Approx(0.05));

  const auto snap = service.get_config("1", 0);
  REQUIRE(snap.has_value());
  CHECK(snap->version == 2);
}
