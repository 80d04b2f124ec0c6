#include "stayers/panel.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <unordered_map>

#include "stayers/error.hpp"

namespace stayers {

namespace {

std::vector<std::string> split_row(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(field);
      field.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  fields.push_back(field);
  for (auto& f : fields) {
    const auto first = f.find_first_not_of(" \t");
    const auto last = f.find_last_not_of(" \t");
    f = first == std::string::npos ? std::string{} : f.substr(first, last - first + 1);
  }
  return fields;
}

std::optional<double> parse_number(const std::string& text) {
  if (text.empty()) return std::nullopt;
  const char* begin = text.data();
  if (*begin == '+') ++begin;
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(begin, text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size() || !std::isfinite(value)) {
    return std::nullopt;
  }
  return value;
}

std::size_t column_index(const std::vector<std::string>& header, const std::string& name) {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw DataError("column '" + name + "' not found in CSV header");
  return static_cast<std::size_t>(it - header.begin());
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sd_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double z : v) ss += (z - m) * (z - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

// Type-7 (linear interpolation) quantile of a sorted sample.
double sorted_quantile(const std::vector<double>& sorted, double p) {
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

VariableSummary summarize_variable(std::string name, const std::vector<double>& p1,
                                   const std::vector<double>& p2) {
  std::vector<double> pooled(p1);
  pooled.insert(pooled.end(), p2.begin(), p2.end());
  VariableSummary s;
  s.name = std::move(name);
  s.pooled_mean = mean_of(pooled);
  s.pooled_sd = sd_of(pooled);
  s.within_pct = within_variation_pct(p1, p2);
  s.mean_period1 = mean_of(p1);
  s.sd_period1 = sd_of(p1);
  s.mean_period2 = mean_of(p2);
  s.sd_period2 = sd_of(p2);
  return s;
}

}  // namespace

std::vector<double> PanelDataset::pooled_x() const {
  std::vector<double> out(x1);
  out.insert(out.end(), x2.begin(), x2.end());
  return out;
}

void PanelDataset::validate() const {
  const std::size_t n = unit_id.size();
  if (y1.size() != n || y2.size() != n || x1.size() != n || x2.size() != n) {
    throw DataError("panel arrays have inconsistent lengths");
  }
  if (n < 2) throw DataError("panel needs at least 2 complete units, got " + std::to_string(n));
  for (const auto* v : {&y1, &y2, &x1, &x2}) {
    if (!std::all_of(v->begin(), v->end(), [](double z) { return std::isfinite(z); })) {
      throw DataError("panel contains non-finite values");
    }
  }
}

LoadResult load_csv(const std::filesystem::path& path, const ColumnMap& columns) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read '" + path.string() + "'");

  std::string line;
  if (!std::getline(in, line)) throw DataError("'" + path.string() + "' is empty");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header = split_row(line);
  const std::size_t id_col = column_index(header, columns.id);
  const std::size_t t_col = column_index(header, columns.period);
  const std::size_t y_col = column_index(header, columns.y);
  const std::size_t x_col = column_index(header, columns.x);
  const std::size_t needed = std::max({id_col, t_col, y_col, x_col}) + 1;

  struct Partial {
    std::optional<double> y[2];
    std::optional<double> x[2];
    bool seen[2] = {false, false};
    bool bad_value = false;
  };
  std::vector<std::string> order;
  std::unordered_map<std::string, Partial> units;

  LoadResult result;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto fields = split_row(line);
    if (fields.size() < needed) {
      throw DataError("line " + std::to_string(line_no) + ": expected at least " +
                      std::to_string(needed) + " fields");
    }
    ++result.log.rows_read;
    const std::string& id = fields[id_col];
    const auto t = parse_number(fields[t_col]);
    if (!t || (*t != 1.0 && *t != 2.0)) {
      throw DataError("line " + std::to_string(line_no) + ": period must be 1 or 2, got '" +
                      fields[t_col] + "'");
    }
    const int period = static_cast<int>(*t) - 1;
    auto [it, inserted] = units.try_emplace(id);
    if (inserted) order.push_back(id);
    Partial& unit = it->second;
    if (unit.seen[period]) {
      throw DataError("duplicate row for unit '" + id + "' period " + fields[t_col]);
    }
    unit.seen[period] = true;
    unit.y[period] = parse_number(fields[y_col]);
    unit.x[period] = parse_number(fields[x_col]);
    if (!unit.y[period] || !unit.x[period]) unit.bad_value = true;
  }

  result.log.units_seen = order.size();
  auto& data = result.data;
  for (const auto& id : order) {
    const Partial& unit = units.at(id);
    std::string reason;
    if (!unit.seen[0] || !unit.seen[1]) {
      reason = "missing period";
    } else if (unit.bad_value) {
      reason = "missing or non-numeric value";
    }
    if (!reason.empty()) {
      ++result.log.units_dropped;
      result.log.dropped_ids.push_back(id);
      result.log.reasons.push_back(reason);
      continue;
    }
    data.unit_id.push_back(id);
    data.y1.push_back(*unit.y[0]);
    data.y2.push_back(*unit.y[1]);
    data.x1.push_back(*unit.x[0]);
    data.x2.push_back(*unit.x[1]);
  }
  if (data.size() < 2) {
    throw DataError("fewer than 2 complete units in '" + path.string() + "'");
  }
  data.validate();
  return result;
}

void write_csv(const PanelDataset& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << "id,t,y,x\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    out << data.unit_id[i] << ",1," << format_double(data.y1[i]) << ','
        << format_double(data.x1[i]) << '\n';
    out << data.unit_id[i] << ",2," << format_double(data.y2[i]) << ','
        << format_double(data.x2[i]) << '\n';
  }
}

double within_variation_pct(const std::vector<double>& period1, const std::vector<double>& period2) {
  const std::size_t n = period1.size();
  double grand = 0.0;
  for (std::size_t i = 0; i < n; ++i) grand += period1[i] + period2[i];
  grand /= static_cast<double>(2 * n);
  double within = 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double unit_mean = 0.5 * (period1[i] + period2[i]);
    within += (period1[i] - unit_mean) * (period1[i] - unit_mean) +
              (period2[i] - unit_mean) * (period2[i] - unit_mean);
    total += (period1[i] - grand) * (period1[i] - grand) +
             (period2[i] - grand) * (period2[i] - grand);
  }
  if (total <= 0.0) return 0.0;
  return std::clamp(100.0 * within / total, 0.0, 100.0);
}

std::size_t ChangeHistogram::total() const {
  return std::accumulate(counts.begin(), counts.end(), zero_count);
}

ChangeHistogram change_histogram(const std::vector<double>& x1, const std::vector<double>& x2) {
  ChangeHistogram hist;
  std::vector<double> moves;
  for (std::size_t i = 0; i < x1.size(); ++i) {
    const double d = x2[i] - x1[i];
    if (d == 0.0) {
      ++hist.zero_count;
    } else {
      moves.push_back(d);
    }
  }
  if (moves.empty()) return hist;
  std::sort(moves.begin(), moves.end());
  const double lo = moves.front();
  const double hi = moves.back();
  const double iqr = sorted_quantile(moves, 0.75) - sorted_quantile(moves, 0.25);
  const double m = static_cast<double>(moves.size());
  double width = 2.0 * iqr / std::cbrt(m);
  if (!(width > 0.0)) {
    width = hi > lo ? (hi - lo) / std::ceil(std::sqrt(m)) : std::abs(lo);
  }
  hist.bin_width = width;
  const double first = std::floor(lo / width);
  double last = std::ceil(hi / width);
  if (last <= first) last = first + 1.0;
  const auto bins = static_cast<std::size_t>(last - first);
  for (std::size_t b = 0; b <= bins; ++b) hist.edges.push_back((first + static_cast<double>(b)) * width);
  hist.counts.assign(bins, 0);
  for (double d : moves) {
    auto b = static_cast<std::size_t>(std::floor(d / width) - first);
    hist.counts[std::min(b, bins - 1)] += 1;
  }
  return hist;
}

SummaryReport summarize(const PanelDataset& data) {
  data.validate();
  SummaryReport report;
  report.n = data.size();
  report.variables.push_back(summarize_variable("x", data.x1, data.x2));
  report.variables.push_back(summarize_variable("y", data.y1, data.y2));
  report.change_x = change_histogram(data.x1, data.x2);
  return report;
}

void to_json(nlohmann::json& j, const SummaryReport& report) {
  nlohmann::json vars = nlohmann::json::array();
  for (const auto& v : report.variables) {
    vars.push_back({{"name", v.name},
                    {"pooled", {{"mean", v.pooled_mean}, {"sd", v.pooled_sd}}},
                    {"within_pct", v.within_pct},
                    {"period1", {{"mean", v.mean_period1}, {"sd", v.sd_period1}}},
                    {"period2", {{"mean", v.mean_period2}, {"sd", v.sd_period2}}}});
  }
  j = {{"n", report.n},
       {"variables", vars},
       {"change_x_histogram",
        {{"zero_count", report.change_x.zero_count},
         {"bin_width", report.change_x.bin_width},
         {"edges", report.change_x.edges},
         {"counts", report.change_x.counts}}}};
}

void to_json(nlohmann::json& j, const IngestionLog& log) {
  j = {{"rows_read", log.rows_read},
       {"units_seen", log.units_seen},
       {"units_dropped", log.units_dropped},
       {"dropped_ids", log.dropped_ids},
       {"reasons", log.reasons}};
}

}  // namespace stayers
