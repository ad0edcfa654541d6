#include "polytrend/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "polytrend/errors.hpp"

namespace polytrend {

std::string to_string(Adjustment a) {
  switch (a) {
    case Adjustment::none: return "none";
    case Adjustment::add1: return "add1";
    default: return "add2";
  }
}

std::string to_string(Scoring s) {
  switch (s) {
    case Scoring::ari: return "ari";
    case Scoring::ord: return "ord";
    default: return "arilog";
  }
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

double parse_real(const std::string& s, std::size_t row, const std::string& col) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw DataError("row " + std::to_string(row) + ", column '" + col +
                    "': cannot parse '" + s + "' as a number");
  }
}

long parse_count(const std::string& s, std::size_t row, const std::string& col) {
  double v = parse_real(s, row, col);
  long l = static_cast<long>(std::llround(v));
  if (std::fabs(v - l) > 1e-9)
    throw DataError("row " + std::to_string(row) + ", column '" + col +
                    "': expected an integer, got '" + s + "'");
  return l;
}

struct Header {
  std::map<std::string, int> index;
  bool has(const std::string& name) const { return index.count(name) > 0; }
  int at(const std::string& name) const { return index.at(name); }
};

Header read_header(std::istream& in, const std::vector<std::string>& required,
                   const std::string& path) {
  std::string line;
  if (!std::getline(in, line))
    throw DataError(path + ": empty file");
  Header h;
  auto cols = split_csv_line(line);
  for (std::size_t i = 0; i < cols.size(); ++i) h.index[trim(cols[i])] = static_cast<int>(i);
  for (const auto& name : required)
    if (!h.has(name))
      throw DataError(path + ": header is missing required column '" + name + "'");
  return h;
}

std::string block_key(const std::string& study, const std::string& stratum) {
  return study + "\x1f" + stratum;
}

void validate_blocks(const std::vector<DoseRecord>& records) {
  std::map<std::string, std::vector<double>> doses;
  for (const auto& r : records) doses[block_key(r.study, r.stratum)].push_back(r.dose);
  for (auto& [key, d] : doses) {
    std::set<double> uniq(d.begin(), d.end());
    std::string label = key;
    std::replace(label.begin(), label.end(), '\x1f', '/');
    if (uniq.size() != d.size())
      throw DataError("block " + label + ": duplicate dose level");
    if (uniq.size() < 3)
      throw DataError("block " + label + ": fewer than 3 dose levels");
    if (uniq.count(0.0) == 0)
      throw DataError("block " + label + ": no zero-dose control group");
    int nonzero = 0;
    for (double v : uniq)
      if (v > 0.0) ++nonzero;
    if (nonzero < 2)
      throw DataError("block " + label + ": fewer than 2 nonzero dose levels");
  }
}

}  // namespace

std::vector<DoseRecord> parse_grouped_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  Header h = read_header(in, {"study", "stratum", "dose", "tumor", "at_risk"}, path);
  const bool has_wscore = h.has("wscore");

  std::vector<DoseRecord> out;
  std::string line;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    auto cells = split_csv_line(line);
    auto cell = [&](const std::string& name) -> std::string {
      int i = h.at(name);
      if (i >= static_cast<int>(cells.size()))
        throw DataError("row " + std::to_string(row) + ": missing column '" + name + "'");
      return trim(cells[i]);
    };
    DoseRecord r;
    r.study = cell("study");
    r.stratum = cell("stratum");
    if (r.study.empty())
      throw DataError("row " + std::to_string(row) + ", column 'study': empty identifier");
    r.dose = parse_real(cell("dose"), row, "dose");
    if (r.dose < 0.0)
      throw DataError("row " + std::to_string(row) + ", column 'dose': negative dose");
    r.tumor = parse_count(cell("tumor"), row, "tumor");
    r.at_risk = parse_count(cell("at_risk"), row, "at_risk");
    if (r.tumor < 0)
      throw DataError("row " + std::to_string(row) + ": negative tumor count");
    if (r.at_risk <= 0)
      throw DataError("row " + std::to_string(row) + ": at_risk must be positive");
    if (r.tumor > r.at_risk)
      throw DataError("row " + std::to_string(row) + ": tumor > at_risk");
    if (has_wscore) r.wscore = cell("wscore");
    out.push_back(std::move(r));
  }
  if (out.empty()) throw DataError(path + ": no data rows");
  validate_blocks(out);
  return out;
}

std::vector<AnimalRecord> parse_animal_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  Header h = read_header(in, {"study", "dose", "tumor", "death_time"}, path);

  std::vector<AnimalRecord> out;
  std::string line;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    auto cells = split_csv_line(line);
    auto cell = [&](const std::string& name) -> std::string {
      int i = h.at(name);
      if (i >= static_cast<int>(cells.size()))
        throw DataError("row " + std::to_string(row) + ": missing column '" + name + "'");
      return trim(cells[i]);
    };
    AnimalRecord r;
    r.study = cell("study");
    r.dose = parse_real(cell("dose"), row, "dose");
    if (r.dose < 0.0)
      throw DataError("row " + std::to_string(row) + ", column 'dose': negative dose");
    long t = parse_count(cell("tumor"), row, "tumor");
    if (t != 0 && t != 1)
      throw DataError("row " + std::to_string(row) + ": tumor must be 0 or 1");
    r.tumor = static_cast<int>(t);
    r.death_time = parse_real(cell("death_time"), row, "death_time");
    if (r.death_time <= 0.0)
      throw DataError("row " + std::to_string(row) + ": nonpositive death_time");
    out.push_back(std::move(r));
  }
  if (out.empty()) throw DataError(path + ": no data rows");
  return out;
}

AdjustedCounts apply_pseudocounts(const std::vector<DoseRecord>& records,
                                  Adjustment mode) {
  const double add = mode == Adjustment::add2 ? 1.0
                     : mode == Adjustment::add1 ? 0.5
                                                : 0.0;
  AdjustedCounts out;
  out.tumor.resize(records.size());
  out.no_tumor.resize(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    out.tumor[i] = records[i].tumor + add;
    out.no_tumor[i] = (records[i].at_risk - records[i].tumor) + add;
  }
  return out;
}

namespace {

// arilog score for one block: ln(dose), zero replaced per rule
std::map<double, double> arilog_map(const std::set<double>& doses,
                                    const ArilogZeroRule& rule) {
  std::vector<double> nonzero;
  for (double d : doses)
    if (d > 0.0) nonzero.push_back(d);
  std::map<double, double> out;
  for (double d : doses) {
    if (d > 0.0) {
      out[d] = std::log(d);
      continue;
    }
    if (rule.kind == ArilogZeroRule::Kind::fraction) {
      if (nonzero.empty())
        throw DataError("arilog scoring: block has no nonzero dose");
      out[d] = std::log(rule.fraction * nonzero.front());
    } else {
      if (nonzero.size() < 2)
        throw DataError(
            "arilog scoring: block needs >= 2 nonzero doses for the "
            "extrapolated control score");
      out[d] = std::log(nonzero[0] * nonzero[0] / nonzero[1]);
    }
  }
  return out;
}

void fill_scores(ScoredDataset& ds, const std::vector<std::string>& block_of_row,
                 const ArilogZeroRule& rule) {
  const Eigen::Index n = ds.dose.size();
  ds.score_ari = ds.dose;
  ds.score_ord.resize(n);
  ds.score_arilog.resize(n);

  std::map<std::string, std::set<double>> block_doses;
  for (Eigen::Index i = 0; i < n; ++i) block_doses[block_of_row[i]].insert(ds.dose[i]);

  std::map<std::string, std::map<double, double>> ordm, logm;
  for (auto& [key, doses] : block_doses) {
    double rank = 0.0;
    for (double d : doses) ordm[key][d] = rank++;
    logm[key] = arilog_map(doses, rule);
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    ds.score_ord[i] = ordm[block_of_row[i]][ds.dose[i]];
    ds.score_arilog[i] = logm[block_of_row[i]][ds.dose[i]];
  }
}

}  // namespace

ScoredDataset compute_dose_scores(const std::vector<DoseRecord>& records,
                                  Adjustment adjustment,
                                  const ArilogZeroRule& rule) {
  if (records.empty()) throw DataError("compute_dose_scores: no records");
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& ra = records[a];
    const auto& rb = records[b];
    return std::tie(ra.study, ra.stratum, ra.dose) <
           std::tie(rb.study, rb.stratum, rb.dose);
  });

  AdjustedCounts adj = apply_pseudocounts(records, adjustment);

  ScoredDataset ds;
  ds.adjustment = adjustment;
  const Eigen::Index n = static_cast<Eigen::Index>(records.size());
  ds.dose.resize(n);
  ds.successes.resize(n);
  ds.failures.resize(n);
  bool any_wscore = std::any_of(records.begin(), records.end(),
                                [](const DoseRecord& r) { return !r.wscore.empty(); });
  std::vector<std::string> blocks(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const DoseRecord& r = records[order[i]];
    ds.study.push_back(r.study);
    ds.stratum.push_back(r.stratum);
    if (any_wscore) ds.wscore.push_back(r.wscore);
    ds.dose[i] = r.dose;
    ds.successes[i] = adj.tumor[order[i]];
    ds.failures[i] = adj.no_tumor[order[i]];
    blocks[i] = block_key(r.study, r.stratum);
  }
  fill_scores(ds, blocks, rule);
  return ds;
}

ScoredDataset compute_dose_scores(const std::vector<AnimalRecord>& records,
                                  const ArilogZeroRule& rule) {
  if (records.empty()) throw DataError("compute_dose_scores: no records");
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& ra = records[a];
    const auto& rb = records[b];
    return std::tie(ra.study, ra.dose, ra.death_time, ra.tumor) <
           std::tie(rb.study, rb.dose, rb.death_time, rb.tumor);
  });

  ScoredDataset ds;
  ds.animal_level = true;
  const Eigen::Index n = static_cast<Eigen::Index>(records.size());
  ds.dose.resize(n);
  ds.successes.resize(n);
  ds.failures.resize(n);
  ds.death_time.resize(n);
  std::vector<std::string> blocks(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const AnimalRecord& r = records[order[i]];
    ds.study.push_back(r.study);
    ds.stratum.push_back("");
    ds.dose[i] = r.dose;
    ds.successes[i] = r.tumor;
    ds.failures[i] = 1.0 - r.tumor;
    ds.death_time[i] = r.death_time;
    blocks[i] = r.study;
  }
  fill_scores(ds, blocks, rule);
  return ds;
}

Eigen::VectorXd compute_polyk_weights(const std::vector<AnimalRecord>& records,
                                      double k, bool per_study_tmax) {
  if (k <= 0.0) throw DataError("compute_polyk_weights: k must be positive");
  if (records.empty()) throw DataError("compute_polyk_weights: no records");
  std::map<std::string, double> tmax;
  double tmax_global = 0.0;
  for (const auto& r : records) {
    tmax[r.study] = std::max(tmax[r.study], r.death_time);
    tmax_global = std::max(tmax_global, r.death_time);
  }
  Eigen::VectorXd w(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.tumor == 1) {
      w[i] = 1.0;
    } else {
      double tm = per_study_tmax ? tmax[r.study] : tmax_global;
      w[i] = std::pow(r.death_time / tm, k);
    }
  }
  return w;
}

ScoredDataset scored_with_polyk(const std::vector<AnimalRecord>& records,
                                double k, bool per_study_tmax,
                                const ArilogZeroRule& rule) {
  std::vector<AnimalRecord> sorted = records;
  std::sort(sorted.begin(), sorted.end(), [](const AnimalRecord& a, const AnimalRecord& b) {
    return std::tie(a.study, a.dose, a.death_time, a.tumor) <
           std::tie(b.study, b.dose, b.death_time, b.tumor);
  });
  ScoredDataset ds = compute_dose_scores(sorted, rule);
  ds.polyk_weight = compute_polyk_weights(sorted, k, per_study_tmax);
  return ds;
}

std::uint64_t dataset_hash(const ScoredDataset& data) {
  std::ostringstream os;
  os.precision(17);
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    os << data.study[i] << '|' << data.stratum[i] << '|' << data.dose[i] << '|'
       << data.successes[i] << '|' << data.failures[i];
    if (data.animal_level) os << '|' << data.death_time[i];
    if (!data.wscore.empty()) os << '|' << data.wscore[i];
    os << '\n';
  }
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (char ch : os.str()) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace polytrend
