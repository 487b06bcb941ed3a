#ifndef PAFT_TRIAL_DATA_HPP
#define PAFT_TRIAL_DATA_HPP

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "paft/error.hpp"
#include "paft/numerics.hpp"

namespace paft {

/// One patient: observed time, event flag, arm and baseline covariates.
struct SubjectRecord {
  double y = 0.0;  ///< observed time min(T, C), > 0
  int delta = 0;   ///< 1 = death observed
  int z = 0;       ///< 1 = experimental arm
  std::vector<double> x;

  friend bool operator==(const SubjectRecord&, const SubjectRecord&) = default;
};

struct TrialDataset {
  std::vector<SubjectRecord> records;
  std::vector<std::string> covariate_names;

  std::size_t size() const noexcept { return records.size(); }
  std::size_t dim() const noexcept { return covariate_names.size(); }

  std::size_t event_count() const noexcept {
    std::size_t k = 0;
    for (const auto& r : records) k += r.delta == 1;
    return k;
  }

  friend bool operator==(const TrialDataset&, const TrialDataset&) = default;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos
                                                                           : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline bool parse_double(std::string_view s, double& out) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc{} && ptr == end;
}

inline std::string format_g(double v, int digits) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

}  // namespace detail

/// Parses the trial CSV format: header `time,event,treatment,<covariates...>`,
/// one subject per row, LF or CRLF line endings. Row numbers in error
/// messages count data rows from 1.
inline TrialDataset load_dataset(std::istream& in) {
  TrialDataset ds;
  std::string line;
  if (!std::getline(in, line)) throw data_error("empty input: missing header");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);

  const auto header = detail::split_csv(line);
  if (header.size() < 3 || header[0] != "time" || header[1] != "event" || header[2] != "treatment")
    throw data_error("header: expected time,event,treatment[,covariates...]");
  for (std::size_t k = 3; k < header.size(); ++k) {
    if (header[k].empty()) throw data_error("header: empty covariate name in column " + std::to_string(k + 1));
    ds.covariate_names.emplace_back(header[k]);
  }
  const std::size_t width = header.size();

  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    ++row;
    const std::string where = "row " + std::to_string(row) + ": ";
    const auto fields = detail::split_csv(line);
    if (fields.size() != width)
      throw data_error(where + "expected " + std::to_string(width) + " fields, found " +
                       std::to_string(fields.size()));
    std::vector<double> v(width);
    for (std::size_t k = 0; k < width; ++k) {
      if (!detail::parse_double(fields[k], v[k]) || !std::isfinite(v[k]))
        throw data_error(where + std::string(header[k]) + " is not a finite number");
    }
    if (!(v[0] > 0.0)) throw data_error(where + "time must be > 0");
    if (v[1] != 0.0 && v[1] != 1.0) throw data_error(where + "event must be 0 or 1");
    if (v[2] != 0.0 && v[2] != 1.0) throw data_error(where + "treatment must be 0 or 1");
    SubjectRecord rec;
    rec.y = v[0];
    rec.delta = static_cast<int>(v[1]);
    rec.z = static_cast<int>(v[2]);
    rec.x.assign(v.begin() + 3, v.end());
    ds.records.push_back(std::move(rec));
  }
  return ds;
}

inline TrialDataset load_dataset_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot open " + path);
  return load_dataset(in);
}

/// Writes the CSV format read by load_dataset; numbers carry 12 significant digits.
inline void serialize(const TrialDataset& ds, std::ostream& out) {
  out << "time,event,treatment";
  for (const auto& name : ds.covariate_names) out << ',' << name;
  out << '\n';
  for (const auto& r : ds.records) {
    out << detail::format_g(r.y, 12) << ',' << r.delta << ',' << r.z;
    for (double v : r.x) out << ',' << detail::format_g(v, 12);
    out << '\n';
  }
}

enum class severity { warning, error };

struct finding {
  paft::severity severity;
  std::string message;
};

struct ValidationReport {
  std::vector<finding> findings;

  bool empty() const noexcept { return findings.empty(); }
  bool has_errors() const noexcept {
    for (const auto& f : findings)
      if (f.severity == severity::error) return true;
    return false;
  }
};

/// Checks the dataset invariants without modifying anything.
inline ValidationReport validate(const TrialDataset& ds) {
  ValidationReport rep;
  auto add = [&](severity s, std::string msg) { rep.findings.push_back({s, std::move(msg)}); };

  if (ds.size() < 2) add(severity::error, "fewer than 2 subjects");
  std::size_t events[2] = {0, 0};
  std::size_t arm[2] = {0, 0};
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& r = ds.records[i];
    const std::string where = "row " + std::to_string(i + 1) + ": ";
    if (!(r.y > 0.0) || !std::isfinite(r.y)) add(severity::error, where + "time must be finite and > 0");
    if (r.delta != 0 && r.delta != 1) add(severity::error, where + "event must be 0 or 1");
    if (r.z != 0 && r.z != 1) {
      add(severity::error, where + "treatment must be 0 or 1");
      continue;
    }
    if (r.x.size() != ds.dim()) add(severity::error, where + "covariate count differs from header");
    for (double v : r.x)
      if (!std::isfinite(v)) {
        add(severity::error, where + "non-finite covariate");
        break;
      }
    ++arm[r.z];
    events[r.z] += r.delta == 1;
  }
  const std::size_t total_events = events[0] + events[1];
  if (ds.size() > 0 && total_events == 0) add(severity::error, "no observed events");
  if (ds.size() > 0 && (arm[0] == 0 || arm[1] == 0)) add(severity::warning, "single arm");
  for (int a = 0; a < 2; ++a)
    if (arm[a] > 0 && events[a] == 0 && total_events > 0)
      add(severity::warning, "zero events in arm z=" + std::to_string(a));
  if (total_events > 0 && static_cast<double>(total_events) < 0.1 * static_cast<double>(ds.size()))
    add(severity::warning, "event rate below 10%");
  return rep;
}

struct affine_transform {
  double mean = 0.0;
  double sd = 1.0;

  double forward(double v) const noexcept { return (v - mean) / sd; }
  double inverse(double v) const noexcept { return mean + sd * v; }
};

struct standardized_dataset {
  TrialDataset dataset;
  affine_transform transform;
};

/// Centers and scales one covariate column (pooled over arms, n-1 sd).
inline standardized_dataset standardize_covariate(const TrialDataset& ds, std::size_t index) {
  if (index >= ds.dim()) throw usage_error("covariate index out of range");
  std::vector<double> col;
  col.reserve(ds.size());
  for (const auto& r : ds.records) col.push_back(r.x[index]);
  const double m = mean(col);
  const double sd = sample_sd(col);
  if (!(sd > 0.0)) throw data_error("zero variance in covariate " + ds.covariate_names[index]);
  standardized_dataset out{ds, {m, sd}};
  for (auto& r : out.dataset.records) r.x[index] = out.transform.forward(r.x[index]);
  return out;
}

/// Same subjects with all covariates dropped (the unadjusted model).
inline TrialDataset without_covariates(const TrialDataset& ds) {
  TrialDataset out;
  out.records.reserve(ds.size());
  for (const auto& r : ds.records) out.records.push_back({r.y, r.delta, r.z, {}});
  return out;
}

/// Rows picked by index, with repetition allowed (bootstrap resamples).
inline TrialDataset subset(const TrialDataset& ds, std::span<const std::size_t> rows) {
  TrialDataset out;
  out.covariate_names = ds.covariate_names;
  out.records.reserve(rows.size());
  for (std::size_t i : rows) out.records.push_back(ds.records.at(i));
  return out;
}

}  // namespace paft

#endif  // PAFT_TRIAL_DATA_HPP
