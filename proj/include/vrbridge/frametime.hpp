#pragma once

// Per-frame timing segments in the style of the SteamVR frame timing view:
// application-scene (poses returned -> second eye submitted), application-other
// (-> frame end), compositor, and idle up to the next frame start.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vrbridge/error.hpp"

namespace vrbridge::frametime {

// Raw event times from the device, all in milliseconds on the device clock.
struct FrameEvents {
  std::uint64_t frameIndex = 0;
  double posesReturnMs = 0.0;
  double secondSubmitMs = 0.0;
  double frameEndMs = 0.0;
  double intervalMs = 0.0;        // presented frame interval (this start -> next start)
  double compositorBudgetMs = 0.0;
  bool dropped = false;
  std::int64_t presentedVsync = 0;
};

struct FrameTimingRecord {
  std::uint64_t frameIndex = 0;
  double posesReturnT = 0.0, secondSubmitT = 0.0, frameEndT = 0.0;  // seconds
  double sceneMs = 0.0, otherMs = 0.0, compositorMs = 0.0, idleMs = 0.0;
  bool dropped = false;
  std::int64_t presentedVsync = 0;

  double interval_ms() const { return sceneMs + otherMs + compositorMs + idleMs; }
  bool operator==(const FrameTimingRecord&) const = default;
};

struct Sink {
  std::vector<FrameTimingRecord> records;
};

// Tolerance for event ordering; literal equal times must not trip it.
inline constexpr double kOrderEpsMs = 1e-9;

inline FrameTimingRecord record_frame(Sink& sink, const FrameEvents& e) {
  if (e.secondSubmitMs < e.posesReturnMs - kOrderEpsMs || e.frameEndMs < e.secondSubmitMs - kOrderEpsMs)
    fail(ErrorCode::OutOfOrderEvents, "frame " + std::to_string(e.frameIndex) + ": events out of order");
  FrameTimingRecord r;
  r.frameIndex = e.frameIndex;
  r.posesReturnT = e.posesReturnMs / 1000.0;
  r.secondSubmitT = e.secondSubmitMs / 1000.0;
  r.frameEndT = e.frameEndMs / 1000.0;
  r.sceneMs = std::max(0.0, e.secondSubmitMs - e.posesReturnMs);
  r.otherMs = std::max(0.0, e.frameEndMs - e.secondSubmitMs);
  const double rest = std::max(0.0, e.intervalMs - r.sceneMs - r.otherMs);
  r.compositorMs = std::min(e.compositorBudgetMs, rest);
  r.idleMs = rest - r.compositorMs;
  r.dropped = e.dropped;
  r.presentedVsync = e.presentedVsync;
  sink.records.push_back(r);
  return r;
}

enum class Rating { VrReady, Interactive, Insufficient };

inline const char* to_string(Rating r) {
  switch (r) {
    case Rating::VrReady: return "VrReady";
    case Rating::Interactive: return "Interactive";
    case Rating::Insufficient: return "Insufficient";
  }
  return "?";
}

inline Rating parse_rating(const std::string& s) {
  if (s == "VrReady") return Rating::VrReady;
  if (s == "Interactive") return Rating::Interactive;
  if (s == "Insufficient") return Rating::Insufficient;
  fail(ErrorCode::ParseError, "unknown rating '" + s + "'");
}

// 10 fps is the interactive bar; VR-ready means holding the display rate.
inline Rating rate_performance(double meanFps, double refreshHz) {
  if (meanFps >= refreshHz - 0.5) return Rating::VrReady;
  if (meanFps >= 10.0) return Rating::Interactive;
  return Rating::Insufficient;
}

struct TimingReport {
  double refreshHz = 90.0;
  std::vector<FrameTimingRecord> records;
  double meanFps = 0.0;
  std::size_t droppedCount = 0;
  double droppedPct = 0.0;
  double sceneP50 = 0.0, sceneP95 = 0.0, sceneP99 = 0.0;
  Rating rating = Rating::Insufficient;

  double frame_period_ms() const { return 1000.0 / refreshHz; }
};

/// Nearest-rank percentile of an unsorted sample.
inline double percentile_nearest_rank(std::vector<double> v, double pct) {
  if (v.empty()) fail(ErrorCode::Empty, "percentile of empty sample");
  std::sort(v.begin(), v.end());
  auto rank = static_cast<std::size_t>(std::ceil(pct / 100.0 * static_cast<double>(v.size())));
  rank = std::clamp<std::size_t>(rank, 1, v.size());
  return v[rank - 1];
}

inline TimingReport aggregate(std::vector<FrameTimingRecord> records, double refreshHz) {
  if (records.empty()) fail(ErrorCode::Empty, "no frame records to aggregate");
  if (!(refreshHz > 0.0)) fail(ErrorCode::ConfigError, "refreshHz must be positive");
  TimingReport r;
  r.refreshHz = refreshHz;
  double elapsed = 0.0;
  std::vector<double> scene;
  scene.reserve(records.size());
  for (const auto& rec : records) {
    elapsed += rec.interval_ms();
    r.droppedCount += rec.dropped ? 1 : 0;
    scene.push_back(rec.sceneMs);
  }
  const double n = static_cast<double>(records.size());
  r.meanFps = elapsed > 0.0 ? n * 1000.0 / elapsed : 0.0;
  // intervals that sit on the vsync grid are counted in whole periods
  const double period = 1000.0 / refreshHz;
  double periods = 0.0;
  bool onGrid = true;
  for (const auto& rec : records) {
    const double k = std::round(rec.interval_ms() / period);
    onGrid = onGrid && k >= 1.0 && std::abs(rec.interval_ms() - k * period) < 1e-6;
    periods += k;
  }
  if (onGrid) r.meanFps = refreshHz * n / periods;
  r.droppedPct = 100.0 * static_cast<double>(r.droppedCount) / n;
  r.sceneP50 = percentile_nearest_rank(scene, 50);
  r.sceneP95 = percentile_nearest_rank(scene, 95);
  r.sceneP99 = percentile_nearest_rank(scene, 99);
  r.rating = rate_performance(r.meanFps, refreshHz);
  r.records = std::move(records);
  return r;
}

// ------------------------------------------------------------------ export

namespace detail {

// Shortest text that parses back to the same double.
inline std::string num(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, p);
}

inline double parse_num(const std::string& s) {
  double v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) fail(ErrorCode::ParseError, "bad number '" + s + "'");
  return v;
}

}  // namespace detail

inline constexpr const char* kCsvHeader = "frameIndex,sceneMs,otherMs,compositorMs,idleMs,dropped";

inline std::string export_csv(const TimingReport& r) {
  std::string out = std::string(kCsvHeader) + "\n";
  for (const auto& rec : r.records) {
    out += std::to_string(rec.frameIndex) + "," + detail::num(rec.sceneMs) + "," + detail::num(rec.otherMs) + "," +
           detail::num(rec.compositorMs) + "," + detail::num(rec.idleMs) + "," + (rec.dropped ? "1" : "0") + "\n";
  }
  return out;
}

/// Reads the CSV back; event timestamps are not part of that schema and stay zero.
inline std::vector<FrameTimingRecord> parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) fail(ErrorCode::ParseError, "CSV header mismatch");
  std::vector<FrameTimingRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ls(line);
    std::string c;
    while (std::getline(ls, c, ',')) cols.push_back(c);
    if (cols.size() != 6) fail(ErrorCode::ParseError, "CSV row has " + std::to_string(cols.size()) + " columns");
    FrameTimingRecord r;
    r.frameIndex = static_cast<std::uint64_t>(detail::parse_num(cols[0]));
    r.sceneMs = detail::parse_num(cols[1]);
    r.otherMs = detail::parse_num(cols[2]);
    r.compositorMs = detail::parse_num(cols[3]);
    r.idleMs = detail::parse_num(cols[4]);
    if (cols[5] != "0" && cols[5] != "1") fail(ErrorCode::ParseError, "dropped must be 0 or 1");
    r.dropped = cols[5] == "1";
    out.push_back(r);
  }
  return out;
}

inline nlohmann::json record_json(const FrameTimingRecord& r) {
  return {{"frameIndex", r.frameIndex}, {"posesReturnT", r.posesReturnT}, {"secondSubmitT", r.secondSubmitT},
          {"frameEndT", r.frameEndT},   {"sceneMs", r.sceneMs},           {"otherMs", r.otherMs},
          {"compositorMs", r.compositorMs}, {"idleMs", r.idleMs},         {"dropped", r.dropped},
          {"presentedVsync", r.presentedVsync}};
}

inline FrameTimingRecord record_from_json(const nlohmann::json& j) {
  try {
    FrameTimingRecord r;
    r.frameIndex = j.at("frameIndex").get<std::uint64_t>();
    r.posesReturnT = j.at("posesReturnT").get<double>();
    r.secondSubmitT = j.at("secondSubmitT").get<double>();
    r.frameEndT = j.at("frameEndT").get<double>();
    r.sceneMs = j.at("sceneMs").get<double>();
    r.otherMs = j.at("otherMs").get<double>();
    r.compositorMs = j.at("compositorMs").get<double>();
    r.idleMs = j.at("idleMs").get<double>();
    r.dropped = j.at("dropped").get<bool>();
    r.presentedVsync = j.at("presentedVsync").get<std::int64_t>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ParseError, std::string("bad timing record: ") + e.what());
  }
}

inline nlohmann::json report_json(const TimingReport& r) {
  nlohmann::json recs = nlohmann::json::array();
  for (const auto& rec : r.records) recs.push_back(record_json(rec));
  return {{"refreshHz", r.refreshHz},
          {"framePeriodMs", r.frame_period_ms()},
          {"frames", r.records.size()},
          {"meanFps", r.meanFps},
          {"droppedCount", r.droppedCount},
          {"droppedPct", r.droppedPct},
          {"sceneMsP50", r.sceneP50},
          {"sceneMsP95", r.sceneP95},
          {"sceneMsP99", r.sceneP99},
          {"rating", to_string(r.rating)},
          {"records", recs}};
}

inline std::string export_json(const TimingReport& r) { return report_json(r).dump(2) + "\n"; }

/// Aggregates are recomputed from the records; a document whose stored
/// aggregates disagree with its records is rejected.
inline TimingReport parse_report_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorCode::ParseError, std::string("report is not JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("records") || !j.contains("refreshHz"))
    fail(ErrorCode::ParseError, "report lacks records or refreshHz");
  std::vector<FrameTimingRecord> recs;
  for (const auto& r : j.at("records")) recs.push_back(record_from_json(r));
  TimingReport out = aggregate(std::move(recs), j.at("refreshHz").get<double>());
  if (j.contains("droppedCount") && j.at("droppedCount").get<std::size_t>() != out.droppedCount)
    fail(ErrorCode::ParseError, "droppedCount disagrees with records");
  return out;
}

// ------------------------------------------------------------------ SVG

struct SvgStyle {
  double barWidth = 4.0;
  double pxPerMs = 10.0;
  double gap = 1.0;
};

inline std::string fmt4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

/// One stacked column per frame, bottom-up: scene, other, compositor, idle.
inline std::string export_stacked_svg(const TimingReport& r, const SvgStyle& st = {}) {
  double tallest = r.frame_period_ms();
  for (const auto& rec : r.records) tallest = std::max(tallest, rec.interval_ms());
  const double h = std::ceil(tallest * st.pxPerMs) + 20.0;
  const double w = static_cast<double>(r.records.size()) * (st.barWidth + st.gap) + 20.0;
  std::string s;
  s += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" + fmt4(w) + "\" height=\"" + fmt4(h) +
       "\" data-px-per-ms=\"" + fmt4(st.pxPerMs) + "\">\n";
  s += "<style>.scene{fill:#3b7dd8}.other{fill:#89b4f0}.compositor{fill:#c07a2e}.idle{fill:#e6e6e6}"
       ".dropped rect.scene{fill:#d83b3b}.dropmark{fill:#d83b3b}.period{stroke:#2a2;stroke-dasharray:4 2}</style>\n";
  const double base = h - 10.0;
  for (std::size_t i = 0; i < r.records.size(); ++i) {
    const auto& rec = r.records[i];
    const double x = 10.0 + static_cast<double>(i) * (st.barWidth + st.gap);
    s += "<g class=\"frame" + std::string(rec.dropped ? " dropped" : "") + "\" data-frame=\"" +
         std::to_string(rec.frameIndex) + "\" data-dropped=\"" + (rec.dropped ? "1" : "0") + "\">";
    double y = base;
    const std::pair<const char*, double> segs[4] = {
        {"scene", rec.sceneMs}, {"other", rec.otherMs}, {"compositor", rec.compositorMs}, {"idle", rec.idleMs}};
    for (const auto& [cls, ms] : segs) {
      const double hh = ms * st.pxPerMs;
      y -= hh;
      s += "<rect class=\"" + std::string(cls) + "\" x=\"" + fmt4(x) + "\" y=\"" + fmt4(y) + "\" width=\"" +
           fmt4(st.barWidth) + "\" height=\"" + fmt4(hh) + "\" data-ms=\"" + detail::num(ms) + "\"/>";
    }
    if (rec.dropped)
      s += "<rect class=\"dropmark\" x=\"" + fmt4(x) + "\" y=\"" + fmt4(base + 2.0) + "\" width=\"" + fmt4(st.barWidth) +
           "\" height=\"4.0000\"/>";
    s += "</g>\n";
  }
  const double py = base - r.frame_period_ms() * st.pxPerMs;
  s += "<line class=\"period\" x1=\"0\" y1=\"" + fmt4(py) + "\" x2=\"" + fmt4(w) + "\" y2=\"" + fmt4(py) + "\"/>\n";
  s += "</svg>\n";
  return s;
}

}  // namespace vrbridge::frametime
