#include "belavkin/serialize.hpp"

#include <cmath>
#include <cstdio>
#include <vector>

#include "json.hpp"

namespace belavkin {
namespace {

using ordered_json = nlohmann::ordered_json;

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void append_header(std::string& out, std::uint64_t digest, std::uint64_t seed,
                   std::uint64_t stream, const std::string& timestamp) {
  out += "# schema_version=" + std::to_string(kSchemaVersion) + "\n";
  out += "# model_digest=" + digest_hex(digest) + "\n";
  out += "# seed=" + std::to_string(seed) + "\n";
  out += "# stream=" + std::to_string(stream) + "\n";
  if (!timestamp.empty()) out += "# generated=" + timestamp + "\n";
}

void append_column_names(std::string& out, int x_columns, bool scheme_column) {
  out += "k,t,outcome";
  if (x_columns == 1) {
    out += ",x";
  } else {
    for (int i = 1; i <= x_columns; ++i) out += ",x" + std::to_string(i);
  }
  static const char* kEntries[4] = {"00", "01", "10", "11"};
  for (const char* e : kEntries) {
    out += std::string(",re") + e + ",im" + e;
  }
  if (scheme_column) out += ",scheme";
  out += "\n";
}

void append_state(std::string& out, const Mat& state) {
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      out += "," + fmt_double(state(i, j).real());
      out += "," + fmt_double(state(i, j).imag());
    }
  }
}

std::vector<double> state_reim(const Mat& state) {
  std::vector<double> v;
  v.reserve(8);
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      v.push_back(state(i, j).real());
      v.push_back(state(i, j).imag());
    }
  }
  return v;
}

// Column names for the x block: "x" alone, or "x1".."xm".
std::vector<std::string> x_names(int x_columns) {
  if (x_columns == 1) return {"x"};
  std::vector<std::string> names;
  for (int i = 1; i <= x_columns; ++i) names.push_back("x" + std::to_string(i));
  return names;
}

}  // namespace

std::string digest_hex(std::uint64_t digest) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(digest));
  return buf;
}

std::string trajectory_csv(const TrajectoryRecord& record, const std::string& timestamp) {
  const int xcols = record.noise_count;
  std::string out;
  append_header(out, record.model_digest, record.seed, record.stream_index, timestamp);
  append_column_names(out, xcols, /*scheme_column=*/false);
  for (std::size_t i = 0; i < record.states.size(); ++i) {
    out += std::to_string(i) + "," + fmt_double(record.times[i]);
    if (i == 0) {
      out += ",-1";
      for (int c = 0; c < xcols; ++c) out += ",0";
    } else {
      out += "," + std::to_string(record.outcomes[i - 1]);
      for (int c = 0; c < xcols; ++c) out += "," + fmt_double(record.x_path[i - 1][c]);
    }
    append_state(out, record.states[i]);
    out += "\n";
  }
  return out;
}

std::string trajectory_json(const TrajectoryRecord& record) {
  const int xcols = record.noise_count;
  ordered_json j;
  j["schema_version"] = kSchemaVersion;
  j["model_digest"] = digest_hex(record.model_digest);
  j["seed"] = record.seed;
  j["stream"] = record.stream_index;
  ordered_json rows;
  rows["k"] = ordered_json::array();
  rows["t"] = ordered_json::array();
  rows["outcome"] = ordered_json::array();
  const auto names = x_names(xcols);
  for (const auto& name : names) rows[name] = ordered_json::array();
  static const char* kReim[8] = {"re00", "im00", "re01", "im01", "re10", "im10", "re11", "im11"};
  for (const char* name : kReim) rows[name] = ordered_json::array();
  for (std::size_t i = 0; i < record.states.size(); ++i) {
    rows["k"].push_back(i);
    rows["t"].push_back(record.times[i]);
    rows["outcome"].push_back(i == 0 ? -1 : record.outcomes[i - 1]);
    for (int c = 0; c < xcols; ++c) {
      rows[names[c]].push_back(i == 0 ? 0.0 : record.x_path[i - 1][c]);
    }
    const auto reim = state_reim(record.states[i]);
    for (int c = 0; c < 8; ++c) rows[kReim[c]].push_back(reim[c]);
  }
  j["rows"] = std::move(rows);
  return j.dump(2) + "\n";
}

std::string sde_csv(const SdePath& path, std::uint64_t model_digest,
                    const std::string& timestamp) {
  const int drivers = static_cast<int>(path.noise_increments.size());
  const int xcols = drivers > 0 ? drivers : 1;
  // Per-row increments line up with rows only when every step was stored.
  const bool full_noise =
      drivers > 0 && path.noise_increments[0].size() + 1 == path.times.size();
  std::string out;
  append_header(out, model_digest, path.seed, path.stream_index, timestamp);
  append_column_names(out, xcols, /*scheme_column=*/true);
  for (std::size_t i = 0; i < path.states.size(); ++i) {
    const long long k = std::llround(path.times[i] / path.dt);
    out += std::to_string(k) + "," + fmt_double(path.times[i]) + ",-1";
    for (int c = 0; c < xcols; ++c) {
      const double x = (full_noise && i > 0) ? path.noise_increments[c][i - 1] : 0.0;
      out += "," + fmt_double(x);
    }
    append_state(out, path.states[i]);
    out += "," + path.scheme + "\n";
  }
  return out;
}

std::string sde_json(const SdePath& path, std::uint64_t model_digest) {
  const int drivers = static_cast<int>(path.noise_increments.size());
  const int xcols = drivers > 0 ? drivers : 1;
  const bool full_noise =
      drivers > 0 && path.noise_increments[0].size() + 1 == path.times.size();
  ordered_json j;
  j["schema_version"] = kSchemaVersion;
  j["model_digest"] = digest_hex(model_digest);
  j["seed"] = path.seed;
  j["stream"] = path.stream_index;
  j["scheme"] = path.scheme;
  j["renormalized"] = path.renormalized;
  j["repaired"] = path.repaired;
  ordered_json rows;
  rows["k"] = ordered_json::array();
  rows["t"] = ordered_json::array();
  rows["outcome"] = ordered_json::array();
  const auto names = x_names(xcols);
  for (const auto& name : names) rows[name] = ordered_json::array();
  static const char* kReim[8] = {"re00", "im00", "re01", "im01", "re10", "im10", "re11", "im11"};
  for (const char* name : kReim) rows[name] = ordered_json::array();
  for (std::size_t i = 0; i < path.states.size(); ++i) {
    rows["k"].push_back(std::llround(path.times[i] / path.dt));
    rows["t"].push_back(path.times[i]);
    rows["outcome"].push_back(-1);
    for (int c = 0; c < xcols; ++c) {
      const double x = (full_noise && i > 0) ? path.noise_increments[c][i - 1] : 0.0;
      rows[names[c]].push_back(x);
    }
    const auto reim = state_reim(path.states[i]);
    for (int c = 0; c < 8; ++c) rows[kReim[c]].push_back(reim[c]);
  }
  j["rows"] = std::move(rows);
  return j.dump(2) + "\n";
}

}  // namespace belavkin
