#include "vhil/report.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

namespace vhil::report {

namespace {

constexpr std::string_view kUndefined = "undefined";

std::optional<double> parse_value(const std::string& text) {
  if (text.empty() || text == kUndefined) {
    return std::nullopt;
  }
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw ReportFormatError("bad value '" + text + "'");
  }
  return v;
}

template <typename T>
T parse_int(const std::string& text) {
  T v{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty()) {
    throw ReportFormatError("bad integer '" + text + "'");
  }
  return v;
}

MetricRow make_row(const std::string& density, const std::string& episode,
                   const std::string& metric, const std::string& value) {
  if (std::find(kMetrics.begin(), kMetrics.end(), metric) == kMetrics.end()) {
    throw ReportFormatError("unknown metric '" + metric + "'");
  }
  return MetricRow{parse_int<std::size_t>(density), parse_int<std::uint32_t>(episode), metric,
                   parse_value(value)};
}

std::string table_value(const std::optional<double>& v) {
  return v ? format_value(*v) : std::string(kUndefined);
}

}  // namespace

std::string format_value(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string format_value(const std::optional<double>& v) {
  return v ? format_value(*v) : std::string();
}

std::vector<MetricRow> to_rows(const scenario::KpiReport& report) {
  std::vector<MetricRow> rows;
  for (const auto& k : report.rows) {
    const std::array<std::optional<double>, kMetrics.size()> values{
        k.mean_delay_s, k.throughput_bps, k.delivered_streams,
        static_cast<double>(k.bytes_received), k.playable_duration_s};
    for (std::size_t m = 0; m < kMetrics.size(); ++m) {
      rows.push_back(MetricRow{k.density, k.episode, std::string(kMetrics[m]), values[m]});
    }
  }
  return rows;
}

void write_csv(std::ostream& out, const std::vector<MetricRow>& rows) {
  out << "density,episode,metric,value\n";
  for (const auto& r : rows) {
    out << r.density << ',' << r.episode << ',' << r.metric << ',' << format_value(r.value)
        << '\n';
  }
}

void write_table(std::ostream& out, const std::vector<MetricRow>& rows) {
  out << std::left << std::setw(9) << "density" << std::setw(9) << "episode" << std::setw(21)
      << "metric" << "value\n";
  out << std::string(60, '-') << '\n';
  for (const auto& r : rows) {
    out << std::left << std::setw(9) << r.density << std::setw(9) << r.episode << std::setw(21)
        << r.metric << table_value(r.value) << '\n';
  }
}

std::vector<MetricRow> read_csv(std::istream& in) {
  std::vector<MetricRow> rows;
  std::string line;
  if (!std::getline(in, line) || line != "density,episode,metric,value") {
    throw ReportFormatError("missing KPI CSV header");
  }
  while (std::getline(in, line)) {
    if (line.empty()) {
      continue;
    }
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      f.push_back(cell);
    }
    if (!line.empty() && line.back() == ',') {
      f.emplace_back();
    }
    if (f.size() != 4) {
      throw ReportFormatError("expected 4 fields: '" + line + "'");
    }
    rows.push_back(make_row(f[0], f[1], f[2], f[3]));
  }
  return rows;
}

std::vector<MetricRow> read_table(std::istream& in) {
  std::vector<MetricRow> rows;
  std::string line;
  std::getline(in, line);
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string d, e, m, v, extra;
    if (!(ss >> d)) {
      continue;
    }
    if (!(ss >> e >> m >> v) || (ss >> extra)) {
      throw ReportFormatError("malformed table row: '" + line + "'");
    }
    rows.push_back(make_row(d, e, m, v));
  }
  return rows;
}

void write_details_csv(std::ostream& out, const scenario::KpiReport& report) {
  out << "density,episode,packets_sent,packets_received,scans_received,enqueued,"
         "data_transmissions,ack_transmissions,collisions,mac_delivered,retry_drops,queue_drops,"
         "mean_reward,action0,action1,action2,action3,events,overloads,max_drift_us,"
         "gw_ingested,gw_delivered,gw_collided,gw_dropped,gw_pending,gw_decode_errors\n";
  for (const auto& k : report.rows) {
    out << k.density << ',' << k.episode << ',' << k.packets_sent << ',' << k.packets_received
        << ',' << k.scans_received << ',' << k.mac.enqueued << ',' << k.mac.data_transmissions
        << ',' << k.mac.ack_transmissions << ',' << k.mac.collisions << ',' << k.mac.delivered
        << ',' << k.mac.retry_drops << ',' << k.mac.queue_drops << ','
        << format_value(k.mean_reward);
    for (auto c : k.action_counts) {
      out << ',' << c;
    }
    out << ',' << k.kernel.events_dispatched << ',' << k.kernel.overloads << ','
        << k.kernel.max_drift.us;
    if (k.gateway) {
      const auto& g = *k.gateway;
      out << ',' << g.ingested << ',' << g.delivered << ',' << g.collided << ',' << g.dropped
          << ',' << g.pending() << ',' << g.decode_errors;
    } else {
      out << ",,,,,,";
    }
    out << '\n';
  }
}

std::filesystem::path emit(const scenario::KpiReport& report, Format format,
                           const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto rows = to_rows(report);
  const auto path = dir / (format == Format::Csv ? "kpi.csv" : "kpi.txt");
  {
    std::ofstream out(path, std::ios::trunc);
    if (format == Format::Csv) {
      write_csv(out, rows);
    } else {
      write_table(out, rows);
    }
    if (!out) {
      throw std::runtime_error("cannot write " + path.string());
    }
  }
  std::ofstream details(dir / "details.csv", std::ios::trunc);
  write_details_csv(details, report);
  return path;
}

std::vector<MetricRow> load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ReportFormatError("cannot open " + path.string());
  }
  std::string first;
  std::getline(in, first);
  in.clear();
  in.seekg(0);
  return first.rfind("density,", 0) == 0 ? read_csv(in) : read_table(in);
}

namespace {

using Key = std::pair<std::size_t, std::string>;

// Last episode per density.
std::map<Key, std::optional<double>> final_values(const std::vector<MetricRow>& rows,
                                                  std::set<std::size_t>& densities) {
  std::map<std::size_t, std::uint32_t> last;
  for (const auto& r : rows) {
    last[r.density] = std::max(last[r.density], r.episode);
  }
  std::map<Key, std::optional<double>> out;
  for (const auto& r : rows) {
    if (r.episode == last[r.density]) {
      out[{r.density, r.metric}] = r.value;
    }
  }
  for (const auto& [d, e] : last) {
    densities.insert(d);
  }
  return out;
}

std::optional<double> percent(const std::optional<double>& b, const std::optional<double>& t) {
  if (!b || !t || *b == 0.0) {
    return std::nullopt;
  }
  return 100.0 * (*t - *b) / *b;
}

}  // namespace

std::vector<PercentCell> compare(const std::vector<MetricRow>& baseline,
                                 const std::vector<MetricRow>& treatment) {
  std::set<std::size_t> db, dt;
  const auto b = final_values(baseline, db);
  const auto t = final_values(treatment, dt);
  if (db != dt) {
    throw MismatchedDensities("baseline and treatment cover different densities");
  }
  std::vector<PercentCell> cells;
  for (std::size_t d : db) {
    for (auto m : kMetrics) {
      const Key key{d, std::string(m)};
      PercentCell c{d, key.second, std::nullopt, std::nullopt, std::nullopt};
      if (auto it = b.find(key); it != b.end()) {
        c.baseline = it->second;
      }
      if (auto it = t.find(key); it != t.end()) {
        c.treatment = it->second;
      }
      c.percent = percent(c.baseline, c.treatment);
      cells.push_back(std::move(c));
    }
  }
  return cells;
}

std::vector<PercentCell> relative_to_benchmark(const std::vector<MetricRow>& rows) {
  std::set<std::size_t> ds;
  const auto v = final_values(rows, ds);
  std::vector<PercentCell> cells;
  if (ds.empty()) {
    return cells;
  }
  const std::size_t bench = *ds.begin();
  for (std::size_t d : ds) {
    for (auto m : kMetrics) {
      PercentCell c{d, std::string(m), std::nullopt, std::nullopt, std::nullopt};
      if (auto it = v.find({bench, c.metric}); it != v.end()) {
        c.baseline = it->second;
      }
      if (auto it = v.find({d, c.metric}); it != v.end()) {
        c.treatment = it->second;
      }
      c.percent = percent(c.baseline, c.treatment);
      cells.push_back(std::move(c));
    }
  }
  return cells;
}

void write_percent_csv(std::ostream& out, const std::vector<PercentCell>& cells) {
  out << "density,metric,baseline,treatment,percent\n";
  for (const auto& c : cells) {
    out << c.density << ',' << c.metric << ',' << table_value(c.baseline) << ','
        << table_value(c.treatment) << ',' << table_value(c.percent) << '\n';
  }
}

}  // namespace vhil::report
