#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "vhil/scenario.hpp"

namespace vhil::report {

inline constexpr std::array<std::string_view, 5> kMetrics{
    "mean_delay_s", "throughput_bps", "delivered_streams", "bytes_received",
    "playable_duration_s"};

enum class Format { Csv, Table };

struct MetricRow {
  std::size_t density = 0;
  std::uint32_t episode = 0;
  std::string metric;
  // Absent for an undefined value (no packets arrived).
  std::optional<double> value;

  bool operator==(const MetricRow&) const = default;
};

class ReportFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MismatchedDensities : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shortest decimal text that reads back to the same double.
std::string format_value(double v);
std::string format_value(const std::optional<double>& v);

/// One row per (density, episode, metric), in density, episode, metric order.
std::vector<MetricRow> to_rows(const scenario::KpiReport& report);

/// density,episode,metric,value
void write_csv(std::ostream& out, const std::vector<MetricRow>& rows);
/// Fixed-width table with the same value strings as the CSV.
void write_table(std::ostream& out, const std::vector<MetricRow>& rows);
std::vector<MetricRow> read_csv(std::istream& in);
std::vector<MetricRow> read_table(std::istream& in);

/// MAC, reward, action and gateway counters per (density, episode).
void write_details_csv(std::ostream& out, const scenario::KpiReport& report);

/// Writes kpi.csv or kpi.txt, plus details.csv, into `dir`.
std::filesystem::path emit(const scenario::KpiReport& report, Format format,
                           const std::filesystem::path& dir);

/// Reads a kpi.csv or kpi.txt file, detected by content.
std::vector<MetricRow> load(const std::filesystem::path& path);

struct PercentCell {
  std::size_t density = 0;
  std::string metric;
  std::optional<double> baseline;
  std::optional<double> treatment;
  // 100 * (treatment - baseline) / baseline; absent when the baseline is
  // zero or either side is undefined.
  std::optional<double> percent;
};

/// Percentage difference per (density, metric) using the last episode of
/// each density. Throws MismatchedDensities when the density sets differ.
std::vector<PercentCell> compare(const std::vector<MetricRow>& baseline,
                                 const std::vector<MetricRow>& treatment);

/// Each density against the smallest density of the same report.
std::vector<PercentCell> relative_to_benchmark(const std::vector<MetricRow>& rows);

/// density,metric,baseline,treatment,percent with "undefined" for absent
/// values.
void write_percent_csv(std::ostream& out, const std::vector<PercentCell>& cells);

}  // namespace vhil::report
