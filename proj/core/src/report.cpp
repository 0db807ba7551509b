#include "cspeech/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

namespace cspeech {
namespace {

using ojson = nlohmann::ordered_json;

constexpr std::array<std::string_view, 13> kColumnLabels = {
    "gleu", "met", "div", "nov", "blrt", "cs", "c_arg", "arg", "tox", "fre", "updown", "width", "depth"};

constexpr std::array<PromptStrategy, 4> kGridOrder = {PromptStrategy::kNone, PromptStrategy::kManual,
                                                      PromptStrategy::kFrequency, PromptStrategy::kCluster};

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

class Table {
public:
  explicit Table(std::vector<std::string> header) { rows_.push_back(std::move(header)); }
  void add(std::vector<std::string> row) { rows_.push_back(std::move(row)); }

  std::string render() const {
    std::vector<std::size_t> width(rows_.front().size(), 0);
    for (const auto& r : rows_) {
      for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
    }
    std::string out;
    for (std::size_t i = 0; i < rows_.size(); ++i) {
      std::string line;
      for (std::size_t c = 0; c < rows_[i].size(); ++c) {
        const auto& cell = rows_[i][c];
        const std::string pad(width[c] - cell.size(), ' ');
        // Text columns left-aligned, numbers right-aligned.
        line += c < text_columns_ ? cell + pad : pad + cell;
        if (c + 1 < rows_[i].size()) line += "  ";
      }
      while (!line.empty() && line.back() == ' ') line.pop_back();
      out += line + '\n';
      if (i == 0) {
        std::size_t total = 0;
        for (auto w : width) total += w + 2;
        out += std::string(total - 2, '-') + '\n';
      }
    }
    return out;
  }

  void set_text_columns(std::size_t n) { text_columns_ = n; }

private:
  std::vector<std::vector<std::string>> rows_;
  std::size_t text_columns_ = 1;
};

ojson key_json(const GroupKey& k) {
  ojson j;
  j["dataset"] = to_string(k.dataset);
  j["backend"] = k.backend_id;
  j["strategy"] = to_string(k.strategy);
  if (k.cs_type) j["cs_type"] = to_string(*k.cs_type);
  return j;
}

}  // namespace

RunReport build_report(std::span<const MetricRow> rows, Provenance provenance,
                       std::size_t n_records, std::size_t n_failed,
                       std::vector<Exclusion> excluded, std::vector<std::string> notes) {
  RunReport r;
  r.provenance = std::move(provenance);
  r.n_records = n_records;
  r.n_failed = n_failed;
  r.vanilla = aggregate(rows, false);
  r.precision = type_precision_grid(rows);
  std::sort(excluded.begin(), excluded.end(), [](const Exclusion& a, const Exclusion& b) {
    return std::tie(a.record_id, a.reason) < std::tie(b.record_id, b.reason);
  });
  r.excluded = std::move(excluded);
  r.notes = std::move(notes);
  return r;
}

nlohmann::ordered_json to_json(const RunReport& report) {
  ojson j;
  const auto& p = report.provenance;
  ojson prov;
  prov["tool_version"] = p.tool_version;
  prov["seed"] = p.seed;
  prov["config_hash"] = p.config_hash;
  prov["backends"] = p.backends;
  prov["strategies"] = p.strategies;
  prov["scorer"] = p.scorer;
  ojson versions = ojson::object();
  for (const auto& [k, v] : p.model_versions) versions[k] = v;
  prov["model_versions"] = std::move(versions);
  prov["warnings"] = p.warnings;
  j["provenance"] = std::move(prov);
  j["records"] = {{"total", report.n_records}, {"failed", report.n_failed},
                  {"excluded", report.excluded.size()}};

  ojson groups = ojson::array();
  for (const auto& g : report.vanilla.groups) {
    ojson o = key_json(g.key);
    o["n"] = g.n_rows;
    ojson metrics;
    for (auto name : kMetricNames) {
      const auto it = g.means.find(std::string(name));
      if (it == g.means.end()) {
        metrics[std::string(name)] = nullptr;
      } else {
        metrics[std::string(name)] = {{"mean", it->second.mean}, {"n", it->second.n}};
      }
    }
    o["metrics"] = std::move(metrics);
    groups.push_back(std::move(o));
  }
  j["metrics"] = std::move(groups);

  ojson grid = ojson::array();
  for (const auto& [key, cells] : report.precision) {
    ojson o;
    o["dataset"] = to_string(key.dataset);
    o["backend"] = key.backend_id;
    o["strategy"] = table_label(key.strategy);
    ojson c;
    for (CsType t : kAllCsTypes) {
      const auto it = cells.find(t);
      if (it == cells.end()) {
        c[std::string(to_string(t))] = nullptr;
      } else {
        c[std::string(to_string(t))] = {{"precision", it->second.precision},
                                        {"n", it->second.n},
                                        {"ties", it->second.ties}};
      }
    }
    o["types"] = std::move(c);
    grid.push_back(std::move(o));
  }
  j["type_precision"] = std::move(grid);

  ojson excl = ojson::array();
  for (const auto& e : report.excluded) excl.push_back({{"record_id", e.record_id}, {"reason", e.reason}});
  j["excluded"] = std::move(excl);
  j["notes"] = report.notes;
  return j;
}

std::string render_text(const RunReport& report) {
  std::ostringstream out;
  const auto& p = report.provenance;
  out << "provenance\n";
  out << "  tool version   " << p.tool_version << '\n';
  out << "  seed           " << p.seed << '\n';
  out << "  config hash    " << p.config_hash << '\n';
  out << "  backends       " << (p.backends.empty() ? "-" : "") ;
  for (std::size_t i = 0; i < p.backends.size(); ++i) out << (i ? ", " : "") << p.backends[i];
  out << '\n';
  out << "  scorer         " << p.scorer << '\n';
  for (const auto& [k, v] : p.model_versions) out << "  model version  " << k << " = " << v << '\n';
  for (const auto& w : p.warnings) out << "  warning        " << w << '\n';
  out << "  records        " << report.n_records << " total, " << report.n_failed << " failed, "
      << report.excluded.size() << " excluded\n\n";

  std::vector<std::string> header = {"dataset", "backend", "strategy", "n"};
  for (auto l : kColumnLabels) header.emplace_back(l);
  Table metrics(header);
  metrics.set_text_columns(3);
  for (const auto& g : report.vanilla.groups) {
    std::vector<std::string> row = {std::string(to_string(g.key.dataset)), g.key.backend_id,
                                    std::string(table_label(g.key.strategy)),
                                    std::to_string(g.n_rows)};
    for (auto name : kMetricNames) {
      const auto it = g.means.find(std::string(name));
      row.push_back(it == g.means.end() ? "-" : fixed(it->second.mean, name == "fre" ? 2 : 3));
    }
    metrics.add(std::move(row));
  }
  out << "metrics\n" << metrics.render() << '\n';

  std::set<std::pair<DatasetId, std::string>> panels;
  for (const auto& [key, cells] : report.precision) panels.emplace(key.dataset, key.backend_id);
  for (const auto& [dataset, backend] : panels) {
    std::vector<std::string> h = {"strategy"};
    for (CsType t : kAllCsTypes) h.emplace_back(to_string(t));
    Table grid(h);
    for (PromptStrategy s : kGridOrder) {
      const auto it = report.precision.find({dataset, backend, s});
      if (it == report.precision.end()) continue;
      std::vector<std::string> row = {std::string(table_label(s))};
      for (CsType t : kAllCsTypes) {
        const auto c = it->second.find(t);
        row.push_back(c == it->second.end() ? "-" : fixed(c->second.precision, 2));
      }
      grid.add(std::move(row));
    }
    out << "type precision: " << to_string(dataset) << " / " << backend << '\n' << grid.render() << '\n';
  }

  if (!report.notes.empty()) {
    out << "notes\n";
    for (const auto& n : report.notes) out << "  " << n << '\n';
  }
  if (!report.excluded.empty()) {
    out << "excluded\n";
    for (const auto& e : report.excluded) out << "  " << e.record_id << ": " << e.reason << '\n';
  }
  return out.str();
}

void write_report(const std::filesystem::path& dir, const RunReport& report) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "report.json", std::ios::binary);
    if (!out) throw IoError("cannot write " + (dir / "report.json").string());
    out << to_json(report).dump(2) << '\n';
  }
  std::ofstream out(dir / "report.txt", std::ios::binary);
  if (!out) throw IoError("cannot write " + (dir / "report.txt").string());
  out << render_text(report);
}

}  // namespace cspeech
