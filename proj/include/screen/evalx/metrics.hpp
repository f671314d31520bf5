#pragma once

#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "screen/core/error.hpp"
#include "screen/corpus/manifest.hpp"

namespace screen::evalx {

/// Binary confusion counts with tb as the positive class.
struct ConfusionMatrix {
  std::int64_t tp = 0;
  std::int64_t fn = 0;
  std::int64_t fp = 0;
  std::int64_t tn = 0;

  std::int64_t total() const { return tp + fn + fp + tn; }

  void validate() const {
    if (tp < 0 || fn < 0 || fp < 0 || tn < 0) invalid("confusion counts must be non-negative");
    if (total() <= 0) invalid("confusion matrix is empty");
  }

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

/// A percentage held exactly as hundredths of a percent, rounded half up from
/// the underlying ratio. `undefined` marks a zero denominator (value 0).
struct Percent {
  std::int64_t hundredths = 0;
  bool undefined = false;

  static Percent ratio(std::int64_t num, std::int64_t den) {
    if (den == 0) return {0, true};
    // round(10000*num/den) with halves going up, in integers.
    return {(20000 * num + den) / (2 * den), false};
  }

  double value() const { return static_cast<double>(hundredths) / 100.0; }

  std::string str() const {
    if (undefined) return "undefined";
    std::string frac = std::to_string(hundredths % 100);
    if (frac.size() < 2) frac.insert(0, "0");
    return std::to_string(hundredths / 100) + "." + frac;
  }

  static Percent parse(const std::string& text) {
    if (text == "undefined") return {0, true};
    const auto dot = text.find('.');
    if (dot == std::string::npos || text.size() != dot + 3 || dot == 0) invalid("malformed percentage '" + text + "'");
    try {
      std::size_t used = 0;
      const long whole = std::stol(text.substr(0, dot), &used);
      if (used != dot) throw std::invalid_argument(text);
      const long frac = std::stol(text.substr(dot + 1), &used);
      if (used != 2) throw std::invalid_argument(text);
      return {whole * 100 + frac, false};
    } catch (const std::logic_error&) {
      invalid("malformed percentage '" + text + "'");
    }
  }

  friend bool operator==(const Percent&, const Percent&) = default;
};

struct ClassMetrics {
  Percent precision;
  Percent recall;
  Percent f1;
  friend bool operator==(const ClassMetrics&, const ClassMetrics&) = default;
};

struct MetricsReport {
  ClassMetrics normal;
  ClassMetrics tb;
  Percent accuracy;
  ConfusionMatrix confusion;
  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

/// F1 is taken from counts directly, 2tp/(2tp+fp+fn), which equals the
/// harmonic mean of precision and recall whenever both are defined.
inline MetricsReport compute_metrics(const ConfusionMatrix& c) {
  c.validate();
  MetricsReport r;
  r.confusion = c;
  r.tb.precision = Percent::ratio(c.tp, c.tp + c.fp);
  r.tb.recall = Percent::ratio(c.tp, c.tp + c.fn);
  r.tb.f1 = Percent::ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn);
  r.normal.precision = Percent::ratio(c.tn, c.tn + c.fn);
  r.normal.recall = Percent::ratio(c.tn, c.tn + c.fp);
  r.normal.f1 = Percent::ratio(2 * c.tn, 2 * c.tn + c.fn + c.fp);
  r.accuracy = Percent::ratio(c.tp + c.tn, c.total());
  return r;
}

/// Table layout: one row per class, a blank line, then the raw counts.
inline std::string format_report(const MetricsReport& r) {
  std::ostringstream out;
  out << "class,precision,recall,f1,accuracy\n";
  auto row = [&](const char* name, const ClassMetrics& m) {
    out << name << ',' << m.precision.str() << ',' << m.recall.str() << ',' << m.f1.str() << ','
        << r.accuracy.str() << '\n';
  };
  row("N", r.normal);
  row("TB", r.tb);
  out << "\ntp,fn,fp,tn\n"
      << r.confusion.tp << ',' << r.confusion.fn << ',' << r.confusion.fp << ',' << r.confusion.tn << '\n';
  return out.str();
}

inline MetricsReport parse_report(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  if (lines.size() < 6 || lines[0] != "class,precision,recall,f1,accuracy" || !lines[3].empty() ||
      lines[4] != "tp,fn,fp,tn") {
    invalid("malformed metrics report");
  }
  MetricsReport r;
  auto row = [&](const std::string& line, const char* name, ClassMetrics& m) {
    const auto f = corpus::detail::csv_split(line);
    if (f.size() != 5 || f[0] != name) invalid("malformed metrics row '" + line + "'");
    m = {Percent::parse(f[1]), Percent::parse(f[2]), Percent::parse(f[3])};
    r.accuracy = Percent::parse(f[4]);
  };
  row(lines[1], "N", r.normal);
  row(lines[2], "TB", r.tb);
  const auto counts = corpus::detail::csv_split(lines[5]);
  if (counts.size() != 4) invalid("malformed confusion counts");
  try {
    r.confusion = {std::stoll(counts[0]), std::stoll(counts[1]), std::stoll(counts[2]), std::stoll(counts[3])};
  } catch (const std::logic_error&) {
    invalid("malformed confusion counts");
  }
  return r;
}

}  // namespace screen::evalx
