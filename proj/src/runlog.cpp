#include "vilbench/runlog.hpp"

#include <array>
#include <charconv>
#include <fstream>
#include <sstream>

#include "vilbench/errors.hpp"

namespace vilbench {

using nlohmann::json;

namespace {

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

double parse_double(std::string_view s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw ConfigError("bad number in run log: '" + std::string(s) + "'");
  return v;
}

std::int64_t parse_int(std::string_view s) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw ConfigError("bad integer in run log: '" + std::string(s) + "'");
  return v;
}

std::optional<double> parse_opt(std::string_view s) {
  if (s.empty()) return std::nullopt;
  return parse_double(s);
}

EbStatus eb_status_from(std::string_view s) {
  if (s == "Normal") return EbStatus::Normal;
  if (s == "Braking") return EbStatus::Braking;
  throw ConfigError("bad eb status in run log: '" + std::string(s) + "'");
}

ActiveChannel active_from(std::string_view s) {
  if (s == "Primary") return ActiveChannel::Primary;
  if (s == "Secondary") return ActiveChannel::Secondary;
  if (s == "None") return ActiveChannel::None;
  throw ConfigError("bad channel in run log: '" + std::string(s) + "'");
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + p.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

const std::vector<std::string>& csv_header() {
  static const std::vector<std::string> header = {
      "tick",          "time",       "x",     "y",     "heading",     "speed",         "accel",
      "steer",         "throttle",   "brake", "cmd_steer", "turn_signal", "lateral_error", "gap",
      "perceived_distance", "mode", "eb_status", "active_channel", "cmd_age"};
  return header;
}

std::string format_double(double v) {
  std::array<char, 32> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

std::string format_row(const TickRow& r) {
  std::string out;
  out.reserve(256);
  auto add = [&](std::string_view s) {
    if (!out.empty()) out.push_back(',');
    out.append(s);
  };
  add(std::to_string(r.tick));
  for (double v : {r.time, r.x, r.y, r.heading, r.speed, r.accel, r.steer, r.throttle, r.brake, r.cmd_steer}) {
    add(format_double(v));
  }
  add(to_string(r.turn_signal));
  add(format_double(r.lateral_error));
  add(r.gap ? format_double(*r.gap) : "");
  add(r.perceived_distance ? format_double(*r.perceived_distance) : "");
  add(to_string(r.mode));
  add(to_string(r.eb_status));
  add(to_string(r.active_channel));
  add(format_double(r.cmd_age));
  return out;
}

TickRow parse_row(std::string_view line) {
  const auto f = split(line, ',');
  if (f.size() != csv_header().size()) throw ConfigError("run log row has " + std::to_string(f.size()) + " fields");
  TickRow r;
  r.tick = parse_int(f[0]);
  r.time = parse_double(f[1]);
  r.x = parse_double(f[2]);
  r.y = parse_double(f[3]);
  r.heading = parse_double(f[4]);
  r.speed = parse_double(f[5]);
  r.accel = parse_double(f[6]);
  r.steer = parse_double(f[7]);
  r.throttle = parse_double(f[8]);
  r.brake = parse_double(f[9]);
  r.cmd_steer = parse_double(f[10]);
  r.turn_signal = turn_signal_from_string(f[11]);
  r.lateral_error = parse_double(f[12]);
  r.gap = parse_opt(f[13]);
  r.perceived_distance = parse_opt(f[14]);
  r.mode = gateway_mode_from_string(f[15]);
  r.eb_status = eb_status_from(f[16]);
  r.active_channel = active_from(f[17]);
  r.cmd_age = parse_double(f[18]);
  return r;
}

std::string rows_to_csv(const std::vector<TickRow>& rows) {
  std::string out;
  for (std::size_t i = 0; i < csv_header().size(); ++i) {
    if (i) out.push_back(',');
    out += csv_header()[i];
  }
  out.push_back('\n');
  for (const auto& r : rows) {
    out += format_row(r);
    out.push_back('\n');
  }
  return out;
}

std::vector<TickRow> rows_from_csv(std::string_view csv) {
  std::vector<TickRow> rows;
  bool header = true;
  for (auto line : split(csv, '\n')) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    rows.push_back(parse_row(line));
  }
  return rows;
}

json sidecar_json(const RunLog& log) {
  json lat = json::array();
  for (const auto& l : log.latencies) {
    lat.push_back({{"trigger_frame", l.trigger_frame},
                   {"onset_time", l.onset_time},
                   {"capture_time", l.capture_time},
                   {"trigger_time", l.trigger_time},
                   {"brake_applied_time", l.brake_applied_time},
                   {"latency_capture_to_brake", l.latency_capture_to_brake()},
                   {"latency_onset_to_brake", l.latency_onset_to_brake()}});
  }
  json ev = json::array();
  for (const auto& e : log.events) {
    ev.push_back({{"tick", e.tick}, {"time", e.time}, {"kind", e.kind}, {"detail", e.detail}});
  }
  json j = {{"scenario", log.scenario},
            {"stage", log.stage},
            {"rows", log.rows.size()},
            {"latencies", lat},
            {"events", ev},
            {"termination", nullptr},
            {"emissions",
             {{"base_ticks", log.emissions.base_ticks},
              {"control", log.emissions.control},
              {"comfort", log.emissions.comfort},
              {"frames_captured", log.emissions.frames_captured},
              {"frames_dropped", log.emissions.frames_dropped},
              {"detections_delivered", log.emissions.detections_delivered}}}};
  if (log.termination) j["termination"] = {{"tick", log.termination->tick}, {"reason", log.termination->reason}};
  if (!log.wall.is_null()) j["wall"] = log.wall;
  return j;
}

void write_run(const std::filesystem::path& dir, const RunLog& log) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "run.csv", std::ios::binary);
    out << rows_to_csv(log.rows);
    if (!out) throw ConfigError("cannot write " + (dir / "run.csv").string());
  }
  std::ofstream out(dir / "run.json", std::ios::binary);
  out << sidecar_json(log).dump(2) << '\n';
  if (!out) throw ConfigError("cannot write " + (dir / "run.json").string());
}

RunLog read_run(const std::filesystem::path& dir) {
  RunLog log;
  log.rows = rows_from_csv(read_file(dir / "run.csv"));
  json j;
  try {
    j = json::parse(read_file(dir / "run.json"));
    log.scenario = j.at("scenario");
    log.stage = j.at("stage");
    for (const auto& l : j.at("latencies")) {
      LatencyRecord r;
      r.trigger_frame = l.at("trigger_frame").get<std::int64_t>();
      r.onset_time = l.at("onset_time").get<double>();
      r.capture_time = l.at("capture_time").get<double>();
      r.trigger_time = l.at("trigger_time").get<double>();
      r.brake_applied_time = l.at("brake_applied_time").get<double>();
      log.latencies.push_back(r);
    }
    for (const auto& e : j.at("events")) {
      log.events.push_back({e.at("tick").get<std::int64_t>(), e.at("time").get<double>(),
                            e.at("kind").get<std::string>(), e.at("detail").get<std::string>()});
    }
    if (!j.at("termination").is_null()) {
      log.termination = Termination{j["termination"].at("tick").get<std::int64_t>(),
                                    j["termination"].at("reason").get<std::string>()};
    }
    const auto& em = j.at("emissions");
    log.emissions.base_ticks = em.at("base_ticks").get<std::int64_t>();
    log.emissions.control = em.at("control").get<std::int64_t>();
    log.emissions.comfort = em.at("comfort").get<std::int64_t>();
    log.emissions.frames_captured = em.at("frames_captured").get<std::int64_t>();
    log.emissions.frames_dropped = em.at("frames_dropped").get<std::int64_t>();
    log.emissions.detections_delivered = em.at("detections_delivered").get<std::int64_t>();
    if (j.contains("wall")) log.wall = j["wall"];
  } catch (const json::exception& e) {
    throw ConfigError(std::string("run.json: ") + e.what());
  }
  return log;
}

}  // namespace vilbench
