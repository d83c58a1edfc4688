#pragma once

// Trajectory ingestion, fixed-length scene windows, kinematic channels and
// synthetic scenarios.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include "gtppo/errors.hpp"

namespace gtppo {

/// One annotated position of one pedestrian in one frame.
struct TrackRecord {
  long frame_id = 0;
  long ped_id = 0;
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const TrackRecord&, const TrackRecord&) = default;
};

enum class DatasetFormat { ethucy, sdd };

/// Positions of one pedestrian over consecutive steps, T x 2.
using Track = Eigen::Matrix<double, Eigen::Dynamic, 2>;

/// A 20-step slice of a scene; every listed pedestrian is present at all steps.
struct SceneWindow {
  std::string scene;
  long start_frame = 0;
  std::vector<long> ped_ids;
  std::vector<Track> obs;  // per pedestrian, t_obs x 2
  std::vector<Track> fut;  // per pedestrian, t_pred x 2
  double dt = 0.4;

  std::size_t size() const { return ped_ids.size(); }
  Eigen::Index t_obs() const { return obs.empty() ? 0 : obs.front().rows(); }
  Eigen::Index t_pred() const { return fut.empty() ? 0 : fut.front().rows(); }

  /// Positions of every pedestrian at observed step t, n x 2.
  Eigen::MatrixXd obs_at(Eigen::Index t) const {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(size()), 2);
    for (std::size_t i = 0; i < size(); ++i) m.row(static_cast<Eigen::Index>(i)) = obs[i].row(t);
    return m;
  }
  Eigen::MatrixXd fut_at(Eigen::Index t) const {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(size()), 2);
    for (std::size_t i = 0; i < size(); ++i) m.row(static_cast<Eigen::Index>(i)) = fut[i].row(t);
    return m;
  }
  Eigen::MatrixXd last_obs() const { return obs_at(t_obs() - 1); }

  void validate() const {
    if (ped_ids.empty()) throw ShapeError("scene window has no pedestrians");
    if (!(dt > 0.0)) throw ShapeError("scene window dt must be positive");
    if (obs.size() != ped_ids.size() || fut.size() != ped_ids.size()) {
      throw ShapeError("scene window track count does not match pedestrian count");
    }
    for (std::size_t i = 0; i < size(); ++i) {
      if (obs[i].rows() != t_obs() || fut[i].rows() != t_pred() || t_obs() < 1 || t_pred() < 1) {
        throw ShapeError("scene window tracks have inconsistent lengths");
      }
    }
  }

  friend bool operator==(const SceneWindow& a, const SceneWindow& b) {
    if (a.scene != b.scene || a.start_frame != b.start_frame || a.ped_ids != b.ped_ids || a.dt != b.dt ||
        a.obs.size() != b.obs.size() || a.fut.size() != b.fut.size()) {
      return false;
    }
    for (std::size_t i = 0; i < a.obs.size(); ++i) {
      if (a.obs[i] != b.obs[i] || a.fut[i] != b.fut[i]) return false;
    }
    return true;
  }
};

/// Per-pedestrian position, velocity and acceleration sequences, each T x 2.
struct KinematicChannels {
  std::vector<Track> positions;
  std::vector<Track> velocities;     // units / second
  std::vector<Track> accelerations;  // units / second^2
};

enum class Span { obs, fut };

namespace detail {

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r' || line[i] == ',')) ++i;
    if (i >= line.size()) break;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r' && line[j] != ',') ++j;
    out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

inline double parse_number(std::string_view field, std::size_t line_no, const char* what) {
  double v = 0.0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  if (!field.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || !std::isfinite(v)) {
    throw ParseError(line_no, std::string("non-numeric ") + what + " field '" + std::string(field) + "'");
  }
  return v;
}

inline long parse_integral(std::string_view field, std::size_t line_no, const char* what) {
  const double v = parse_number(field, line_no, what);
  if (v != std::floor(v) || std::abs(v) > 1e15) {
    throw ParseError(line_no, std::string(what) + " is not an integer: '" + std::string(field) + "'");
  }
  return static_cast<long>(v);
}

inline std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

}  // namespace detail

/// Parses a trajectory file.
///
/// ethucy: `frame_id ped_id x y`, whitespace separated.
/// sdd: raw annotation rows `track xmin ymin xmax ymax frame lost occluded
/// generated "label"`, reduced to bounding-box centers; only visible
/// pedestrians are kept.
///
/// The result is sorted by (ped_id, frame_id). Malformed lines raise
/// ParseError with the 1-based line number; repeated (frame, ped) pairs raise
/// DuplicateRecordError.
inline std::vector<TrackRecord> parse_records(std::istream& in, DatasetFormat format) {
  std::vector<TrackRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto fields = detail::split_fields(line);
    if (fields.empty()) continue;
    if (format == DatasetFormat::ethucy) {
      if (fields.size() != 4) {
        throw ParseError(line_no, "expected 4 fields, got " + std::to_string(fields.size()));
      }
      out.push_back({detail::parse_integral(fields[0], line_no, "frame_id"),
                     detail::parse_integral(fields[1], line_no, "ped_id"),
                     detail::parse_number(fields[2], line_no, "x"), detail::parse_number(fields[3], line_no, "y")});
    } else {
      if (fields.size() != 10) {
        throw ParseError(line_no, "expected 10 annotation fields, got " + std::to_string(fields.size()));
      }
      const long track = detail::parse_integral(fields[0], line_no, "track_id");
      const double xmin = detail::parse_number(fields[1], line_no, "xmin");
      const double ymin = detail::parse_number(fields[2], line_no, "ymin");
      const double xmax = detail::parse_number(fields[3], line_no, "xmax");
      const double ymax = detail::parse_number(fields[4], line_no, "ymax");
      const long frame = detail::parse_integral(fields[5], line_no, "frame");
      const long lost = detail::parse_integral(fields[6], line_no, "lost");
      detail::parse_integral(fields[7], line_no, "occluded");
      detail::parse_integral(fields[8], line_no, "generated");
      std::string_view label = fields[9];
      if (label.size() >= 2 && label.front() == '"' && label.back() == '"') label = label.substr(1, label.size() - 2);
      if (lost != 0 || label != "Pedestrian") continue;
      out.push_back({frame, track, 0.5 * (xmin + xmax), 0.5 * (ymin + ymax)});
    }
  }
  std::sort(out.begin(), out.end(), [](const TrackRecord& a, const TrackRecord& b) {
    return a.ped_id != b.ped_id ? a.ped_id < b.ped_id : a.frame_id < b.frame_id;
  });
  for (std::size_t i = 1; i < out.size(); ++i) {
    if (out[i].ped_id == out[i - 1].ped_id && out[i].frame_id == out[i - 1].frame_id) {
      throw DuplicateRecordError(out[i].frame_id, out[i].ped_id);
    }
  }
  return out;
}

inline std::vector<TrackRecord> parse_records(std::string_view text, DatasetFormat format) {
  std::istringstream in{std::string(text)};
  return parse_records(in, format);
}

/// Writes records in the ethucy format with round-trip exact coordinates.
inline void write_records(std::ostream& out, const std::vector<TrackRecord>& records) {
  for (const auto& r : records) {
    out << r.frame_id << '\t' << r.ped_id << '\t' << detail::format_double(r.x) << '\t'
        << detail::format_double(r.y) << '\n';
  }
}

/// Keeps every `factor`-th distinct frame (counting from the first one).
inline std::vector<TrackRecord> downsample(const std::vector<TrackRecord>& records, int factor) {
  if (factor < 1) throw ConfigError("downsample factor must be >= 1");
  if (factor == 1) return records;
  std::set<long> frames;
  for (const auto& r : records) frames.insert(r.frame_id);
  std::set<long> kept;
  long k = 0;
  for (long f : frames) {
    if (k++ % factor == 0) kept.insert(f);
  }
  std::vector<TrackRecord> out;
  for (const auto& r : records) {
    if (kept.count(r.frame_id)) out.push_back(r);
  }
  return out;
}

/// Slides a window of t_obs + t_pred distinct frames over the scene.
///
/// A pedestrian belongs to the window at a given offset only when annotated in
/// every one of its frames. Windows left without pedestrians are dropped.
inline std::vector<SceneWindow> build_windows(const std::vector<TrackRecord>& records, int t_obs = 8,
                                              int t_pred = 12, int stride = 1, double dt = 0.4,
                                              const std::string& scene = {}) {
  if (t_obs <= 0 || t_pred <= 0) throw ConfigError("t_obs and t_pred must be positive");
  if (stride <= 0) throw ConfigError("stride must be positive");
  if (!(dt > 0.0)) throw ConfigError("dt must be positive");
  const std::size_t length = static_cast<std::size_t>(t_obs + t_pred);

  std::vector<long> frames;
  frames.reserve(records.size());
  for (const auto& r : records) frames.push_back(r.frame_id);
  std::sort(frames.begin(), frames.end());
  frames.erase(std::unique(frames.begin(), frames.end()), frames.end());
  if (frames.size() < length) return {};
  auto frame_index = [&](long f) {
    return static_cast<std::size_t>(std::lower_bound(frames.begin(), frames.end(), f) - frames.begin());
  };

  // offset -> (ped_id, positions over the window)
  std::map<std::size_t, std::vector<std::pair<long, Track>>> members;
  std::size_t i = 0;
  while (i < records.size()) {
    std::size_t j = i;
    while (j < records.size() && records[j].ped_id == records[i].ped_id) ++j;
    std::vector<std::pair<std::size_t, std::size_t>> idx;  // (frame index, record index)
    for (std::size_t r = i; r < j; ++r) idx.emplace_back(frame_index(records[r].frame_id), r);
    std::sort(idx.begin(), idx.end());
    std::size_t run = 0;
    while (run < idx.size()) {
      std::size_t end = run + 1;
      while (end < idx.size() && idx[end].first == idx[end - 1].first + 1) ++end;
      if (end - run >= length) {
        const std::size_t first = idx[run].first;
        const std::size_t last_start = idx[end - 1].first + 1 - length;
        for (std::size_t off = first; off <= last_start; ++off) {
          if (off % static_cast<std::size_t>(stride) != 0) continue;
          Track pos(static_cast<Eigen::Index>(length), 2);
          for (std::size_t t = 0; t < length; ++t) {
            const auto& rec = records[idx[run + (off - first) + t].second];
            pos(static_cast<Eigen::Index>(t), 0) = rec.x;
            pos(static_cast<Eigen::Index>(t), 1) = rec.y;
          }
          members[off].emplace_back(records[i].ped_id, std::move(pos));
        }
      }
      run = end;
    }
    i = j;
  }

  std::vector<SceneWindow> out;
  out.reserve(members.size());
  for (auto& [off, peds] : members) {
    std::sort(peds.begin(), peds.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    SceneWindow w;
    w.scene = scene;
    w.start_frame = frames[off];
    w.dt = dt;
    for (auto& [id, pos] : peds) {
      w.ped_ids.push_back(id);
      w.obs.push_back(pos.topRows(t_obs));
      w.fut.push_back(pos.bottomRows(t_pred));
    }
    out.push_back(std::move(w));
  }
  return out;
}

/// Lays windows out back to back as records: window k occupies its own block
/// of frames, so rebuilding with the same window length recovers them.
inline std::vector<TrackRecord> windows_to_records(const std::vector<SceneWindow>& windows, long frame_step = 10) {
  std::vector<TrackRecord> out;
  for (const auto& w : windows) {
    const Eigen::Index len = w.t_obs() + w.t_pred();
    for (std::size_t i = 0; i < w.size(); ++i) {
      for (Eigen::Index t = 0; t < len; ++t) {
        const auto p = t < w.t_obs() ? w.obs[i].row(t) : w.fut[i].row(t - w.t_obs());
        out.push_back({w.start_frame + t * frame_step, w.ped_ids[i], p(0), p(1)});
      }
    }
  }
  std::sort(out.begin(), out.end(), [](const TrackRecord& a, const TrackRecord& b) {
    return a.ped_id != b.ped_id ? a.ped_id < b.ped_id : a.frame_id < b.frame_id;
  });
  return out;
}

namespace detail {

inline Track finite_difference(const Track& x, double dt) {
  Track d = Track::Zero(x.rows(), 2);
  if (x.rows() < 2) return d;
  for (Eigen::Index t = 1; t < x.rows(); ++t) d.row(t) = (x.row(t) - x.row(t - 1)) / dt;
  d.row(0) = d.row(1);
  return d;
}

}  // namespace detail

/// Finite-difference velocities and accelerations of one span of a window.
/// The first element of each derived sequence repeats the second.
inline KinematicChannels kinematics(const SceneWindow& window, Span span) {
  if (!(window.dt > 0.0)) throw ShapeError("kinematics: dt must be positive");
  const auto& src = span == Span::obs ? window.obs : window.fut;
  KinematicChannels k;
  k.positions = src;
  for (const auto& p : src) {
    Track v = detail::finite_difference(p, window.dt);
    k.accelerations.push_back(detail::finite_difference(v, window.dt));
    k.velocities.push_back(std::move(v));
  }
  return k;
}

inline const std::vector<std::string>& eth_ucy_scenes() {
  static const std::vector<std::string> names{"ETH", "HOTEL", "UNIV", "ZARA1", "ZARA2"};
  return names;
}

struct SceneSplit {
  std::vector<std::string> train;
  std::vector<std::string> test;
};

/// Train on every scene except `held_out`, test on `held_out`.
inline SceneSplit leave_one_out_split(const std::vector<std::string>& scene_names, const std::string& held_out) {
  if (std::find(scene_names.begin(), scene_names.end(), held_out) == scene_names.end()) {
    throw ConfigError("held-out scene '" + held_out + "' is not one of the dataset scenes");
  }
  SceneSplit s;
  for (const auto& n : scene_names) (n == held_out ? s.test : s.train).push_back(n);
  return s;
}

/// The fixed Stanford Drone video split: 31 training and 17 test videos.
inline const SceneSplit& sdd_split() {
  static const SceneSplit split{
      {"bookstore_0", "bookstore_1", "bookstore_2", "bookstore_3", "coupa_3", "deathCircle_0",
       "deathCircle_1", "deathCircle_2", "deathCircle_3", "deathCircle_4", "gates_0", "gates_1",
       "gates_3", "gates_4", "gates_5", "gates_6", "gates_7", "gates_8", "hyang_4", "hyang_5",
       "hyang_6", "hyang_7", "hyang_9", "nexus_0", "nexus_1", "nexus_2", "nexus_3", "nexus_4",
       "nexus_7", "nexus_8", "nexus_9"},
      {"coupa_0", "coupa_1", "gates_2", "hyang_0", "hyang_1", "hyang_3", "hyang_8", "little_0",
       "little_1", "little_2", "little_3", "nexus_5", "nexus_6", "quad_0", "quad_1", "quad_2", "quad_3"}};
  return split;
}

// ---------------------------------------------------------------------------
// Synthetic scenarios.

enum class SyntheticKind { linear, turn, crossing, still };

inline SyntheticKind synthetic_kind_from_string(const std::string& s) {
  if (s == "linear") return SyntheticKind::linear;
  if (s == "turn") return SyntheticKind::turn;
  if (s == "crossing") return SyntheticKind::crossing;
  if (s == "still") return SyntheticKind::still;
  throw ConfigError("unknown synthetic kind '" + s + "'");
}

inline std::string to_string(SyntheticKind k) {
  switch (k) {
    case SyntheticKind::linear: return "linear";
    case SyntheticKind::turn: return "turn";
    case SyntheticKind::crossing: return "crossing";
    case SyntheticKind::still: return "still";
  }
  return "?";
}

namespace detail {

// Coordinates are kept on a dyadic grid so that integration and constant
// velocity extrapolation are exact in double precision.
inline double dyadic(double v, double denom) { return std::round(v * denom) / denom; }

inline Eigen::RowVector2d random_step(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> angle(0.0, 2.0 * 3.14159265358979323846);
  std::uniform_real_distribution<double> speed(0.3, 0.6);
  const double a = angle(rng);
  const double s = speed(rng);
  return {dyadic(s * std::cos(a), 64.0), dyadic(s * std::sin(a), 64.0)};
}

}  // namespace detail

/// Deterministic synthetic windows with `n_ped` pedestrians each.
///
///   linear   : constant velocity
///   turn     : constant velocity, then a 90 degree left or right turn; the
///              displacement into step 11 is the first rotated one
///   crossing : two groups walking perpendicular paths that intersect
///              during the prediction horizon
///   still    : no motion
inline std::vector<SceneWindow> generate_synthetic(SyntheticKind kind, int n_ped, std::uint64_t seed,
                                                   int windows = 1, double dt = 0.4, int t_obs = 8,
                                                   int t_pred = 12) {
  if (n_ped < 1) throw ConfigError("synthetic scenes need at least one pedestrian");
  if (windows < 0 || t_obs < 1 || t_pred < 1) throw ConfigError("bad synthetic window configuration");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> pos(-4.0, 4.0);
  std::bernoulli_distribution coin(0.5);
  const int len = t_obs + t_pred;
  const int turn_step = 10;

  std::vector<SceneWindow> out;
  long next_id = 1;
  for (int w = 0; w < windows; ++w) {
    SceneWindow win;
    win.scene = "synthetic_" + to_string(kind);
    win.start_frame = static_cast<long>(w) * len * 10;
    win.dt = dt;

    // Crossing: shared group speed and a random 90-degree orientation of the layout.
    const int quarter = std::uniform_int_distribution<int>(0, 3)(rng);
    const double group_speed = detail::dyadic(std::uniform_real_distribution<double>(0.3, 0.5)(rng), 64.0);
    const Eigen::RowVector2d center(detail::dyadic(pos(rng), 8.0), detail::dyadic(pos(rng), 8.0));
    const int cross_at = std::uniform_int_distribution<int>(t_obs + 2, len - 4)(rng);
    const int group_a = (n_ped + 1) / 2;

    for (int i = 0; i < n_ped; ++i) {
      Track p(len, 2);
      Eigen::RowVector2d start(detail::dyadic(pos(rng), 8.0), detail::dyadic(pos(rng), 8.0));
      switch (kind) {
        case SyntheticKind::still:
          for (int t = 0; t < len; ++t) p.row(t) = start;
          break;
        case SyntheticKind::linear: {
          const auto d = detail::random_step(rng);
          for (int t = 0; t < len; ++t) p.row(t) = start + t * d;
          break;
        }
        case SyntheticKind::turn: {
          const auto d = detail::random_step(rng);
          const double sign = coin(rng) ? 1.0 : -1.0;
          const Eigen::RowVector2d r(-sign * d(1), sign * d(0));
          for (int t = 0; t < len; ++t) {
            p.row(t) = t <= turn_step ? Eigen::RowVector2d(start + t * d)
                                      : Eigen::RowVector2d(start + turn_step * d + (t - turn_step) * r);
          }
          break;
        }
        case SyntheticKind::crossing: {
          const bool in_a = i < group_a;
          const int rank = in_a ? i : i - group_a;
          const double lateral = detail::dyadic(0.75 * rank - 0.375 * ((in_a ? group_a : n_ped - group_a) - 1), 8.0);
          Eigen::RowVector2d dir = in_a ? Eigen::RowVector2d(1.0, 0.0) : Eigen::RowVector2d(0.0, 1.0);
          Eigen::RowVector2d side = in_a ? Eigen::RowVector2d(0.0, 1.0) : Eigen::RowVector2d(1.0, 0.0);
          for (int q = 0; q < quarter; ++q) {
            dir = Eigen::RowVector2d(-dir(1), dir(0));
            side = Eigen::RowVector2d(-side(1), side(0));
          }
          const Eigen::RowVector2d d = group_speed * dir;
          const Eigen::RowVector2d origin = center + lateral * side - cross_at * d;
          for (int t = 0; t < len; ++t) p.row(t) = origin + t * d;
          break;
        }
      }
      win.ped_ids.push_back(next_id++);
      win.obs.push_back(p.topRows(t_obs));
      win.fut.push_back(p.bottomRows(t_pred));
    }
    out.push_back(std::move(win));
  }
  return out;
}

}  // namespace gtppo
