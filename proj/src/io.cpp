#include "sofqr/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>
#include <unordered_map>

#include "sofqr/numerics.hpp"

namespace sofqr {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\"");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\"");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s, const std::string& where) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (!s.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) {
    if (s == "NA" || s == "nan" || s == "NaN") throw ValidationError(where + ": missing value");
    throw ValidationError(where + ": cannot parse number '" + s + "'");
  }
  return v;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<long> line_numbers;

  int column(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    return it == header.end() ? -1 : static_cast<int>(it - header.begin());
  }
};

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  CsvTable t;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    auto cells = split_csv(line);
    if (t.header.empty()) {
      t.header = std::move(cells);
      continue;
    }
    if (cells.size() != t.header.size()) {
      std::ostringstream msg;
      msg << path << ":" << lineno << ": expected " << t.header.size() << " fields, found " << cells.size();
      throw ValidationError(msg.str());
    }
    t.rows.push_back(std::move(cells));
    t.line_numbers.push_back(lineno);
  }
  if (t.header.empty()) throw ValidationError("'" + path + "' has no header");
  return t;
}

struct Cell {
  double value = 0.0;
  int invalid = 0;
};

struct SubjectBlock {
  std::vector<std::string> replicate_order;
  std::unordered_map<std::string, std::map<double, Cell>> replicates;
};

std::string join(const std::vector<std::string>& items, std::size_t limit = 20) {
  std::ostringstream out;
  for (std::size_t i = 0; i < items.size() && i < limit; ++i) out << (i ? "; " : "") << items[i];
  if (items.size() > limit) out << "; ... (" << items.size() - limit << " more)";
  return out.str();
}

std::string fmt(double v) {
  std::ostringstream out;
  out << std::setprecision(17) << v;
  return out.str();
}

}  // namespace

FunctionalDataset ingest_long_csv(const std::string& functional_path, const std::string& scalar_path) {
  const CsvTable scalar = read_csv(scalar_path);
  const int c_sid = scalar.column("subject_id");
  const int c_y = scalar.column("y");
  if (c_sid < 0 || c_y < 0) throw ValidationError(scalar_path + ": needs subject_id and y columns");
  std::vector<int> z_cols;
  std::vector<std::string> z_names;
  for (std::size_t c = 0; c < scalar.header.size(); ++c) {
    if (scalar.header[c].rfind("z_", 0) == 0) {
      z_cols.push_back(static_cast<int>(c));
      z_names.push_back(scalar.header[c]);
    }
  }

  const CsvTable func = read_csv(functional_path);
  const int f_sid = func.column("subject_id");
  const int f_rep = func.column("replicate_id");
  const int f_time = func.column("time");
  const int f_val = func.column("value");
  const int f_inv = func.column("invalid");
  if (f_sid < 0 || f_rep < 0 || f_time < 0 || f_val < 0)
    throw ValidationError(functional_path + ": needs subject_id, replicate_id, time and value columns");

  std::unordered_map<std::string, SubjectBlock> blocks;
  std::set<double> all_times;
  for (std::size_t r = 0; r < func.rows.size(); ++r) {
    const auto& row = func.rows[r];
    const std::string where = functional_path + ":" + std::to_string(func.line_numbers[r]);
    const std::string& sid = row[f_sid];
    const std::string& rid = row[f_rep];
    const double t = parse_double(row[f_time], where);
    Cell cell{parse_double(row[f_val], where), 0};
    if (f_inv >= 0) cell.invalid = parse_double(row[f_inv], where) != 0.0 ? 1 : 0;
    auto& block = blocks[sid];
    auto [rit, fresh] = block.replicates.try_emplace(rid);
    if (fresh) block.replicate_order.push_back(rid);
    if (!rit->second.emplace(t, cell).second) {
      throw ValidationError(where + ": duplicate entry for subject " + sid + ", replicate " + rid + ", time " +
                            row[f_time]);
    }
    all_times.insert(t);
  }
  if (all_times.size() < 2) throw ValidationError(functional_path + ": need at least two distinct time points");

  // Replicate ids expected for every subject: the union in first-seen order.
  std::vector<std::string> rep_ids;
  std::set<std::string> seen;
  for (const auto& row : scalar.rows) {
    auto it = blocks.find(row[c_sid]);
    if (it == blocks.end()) continue;
    for (const auto& rid : it->second.replicate_order)
      if (seen.insert(rid).second) rep_ids.push_back(rid);
  }

  const std::vector<double> times(all_times.begin(), all_times.end());
  const std::size_t T = times.size();
  std::vector<std::string> problems;
  std::set<std::string> scalar_ids;
  for (const auto& row : scalar.rows) {
    const std::string& sid = row[c_sid];
    if (!scalar_ids.insert(sid).second) problems.push_back("subject " + sid + ": duplicated in scalar file");
    auto it = blocks.find(sid);
    if (it == blocks.end()) {
      problems.push_back("subject " + sid + ": no functional rows");
      continue;
    }
    for (const auto& rid : rep_ids) {
      auto rit = it->second.replicates.find(rid);
      if (rit == it->second.replicates.end()) {
        problems.push_back("subject " + sid + ": missing replicate " + rid);
      } else if (rit->second.size() != T) {
        problems.push_back("subject " + sid + ", replicate " + rid + ": " + std::to_string(rit->second.size()) +
                           " of " + std::to_string(T) + " grid times (ragged grid)");
      }
    }
  }
  for (const auto& [sid, block] : blocks) {
    (void)block;
    if (!scalar_ids.count(sid)) problems.push_back("subject " + sid + ": functional rows but no scalar row");
  }
  if (!problems.empty()) {
    std::sort(problems.begin(), problems.end());
    throw ValidationError("ingest: " + std::to_string(problems.size()) + " problem(s): " + join(problems));
  }

  FunctionalDataset d;
  const double t0 = times.front();
  const double span = times.back() - t0;
  d.grid.resize(static_cast<Eigen::Index>(T));
  for (std::size_t k = 0; k < T; ++k) d.grid[static_cast<Eigen::Index>(k)] = (times[k] - t0) / span;
  d.grid[0] = 0.0;
  d.grid[static_cast<Eigen::Index>(T) - 1] = 1.0;

  const int n = static_cast<int>(scalar.rows.size());
  const int J = static_cast<int>(rep_ids.size());
  d.W.resize(n);
  d.Z.resize(n, static_cast<Eigen::Index>(z_cols.size()));
  d.Y.resize(n);
  bool any_invalid = false;
  std::vector<Eigen::MatrixXi> invalid(n);
  for (int i = 0; i < n; ++i) {
    const auto& row = scalar.rows[i];
    const std::string where = scalar_path + ":" + std::to_string(scalar.line_numbers[i]);
    d.subject_ids.push_back(row[c_sid]);
    d.Y[i] = parse_double(row[c_y], where);
    for (std::size_t c = 0; c < z_cols.size(); ++c)
      d.Z(i, static_cast<Eigen::Index>(c)) = parse_double(row[z_cols[c]], where);
    const auto& block = blocks.at(row[c_sid]);
    d.W[i].resize(J, static_cast<Eigen::Index>(T));
    invalid[i].resize(J, static_cast<Eigen::Index>(T));
    for (int j = 0; j < J; ++j) {
      Eigen::Index k = 0;
      for (const auto& [t, cell] : block.replicates.at(rep_ids[j])) {
        (void)t;
        d.W[i](j, k) = cell.value;
        invalid[i](j, k) = cell.invalid;
        any_invalid = any_invalid || cell.invalid != 0;
        ++k;
      }
    }
  }
  if (f_inv >= 0 && any_invalid) d.invalid = std::move(invalid);
  d.covariate_names = z_names;
  d.validate();
  return d;
}

void export_long_csv(const FunctionalDataset& data, const std::string& functional_path,
                     const std::string& scalar_path) {
  data.validate();
  auto sid = [&](int i) { return data.subject_ids.empty() ? std::to_string(i + 1) : data.subject_ids[i]; };
  std::ofstream f(functional_path);
  if (!f) throw ValidationError("cannot write '" + functional_path + "'");
  const bool mask = !data.invalid.empty();
  f << "subject_id,replicate_id,time,value" << (mask ? ",invalid" : "") << '\n';
  for (int i = 0; i < data.n(); ++i) {
    for (int j = 0; j < data.J(); ++j) {
      for (int t = 0; t < data.T(); ++t) {
        f << sid(i) << ',' << j + 1 << ',' << fmt(data.grid[t]) << ',' << fmt(data.W[i](j, t));
        if (mask) f << ',' << data.invalid[i](j, t);
        f << '\n';
      }
    }
  }
  std::ofstream s(scalar_path);
  if (!s) throw ValidationError("cannot write '" + scalar_path + "'");
  s << "subject_id,y";
  for (int k = 0; k < data.p(); ++k) s << ",z_" << k + 1;
  s << '\n';
  for (int i = 0; i < data.n(); ++i) {
    s << sid(i) << ',' << fmt(data.Y[i]);
    for (int k = 0; k < data.p(); ++k) s << ',' << fmt(data.Z(i, k));
    s << '\n';
  }
}

FunctionalDataset preprocess_activity(const FunctionalDataset& data, const PreprocessOptions& opt,
                                      PreprocessReport* report) {
  data.validate();
  if (!(opt.winsorize_pct > 0.0 && opt.winsorize_pct <= 1.0))
    throw ValidationError("preprocess: winsorize_pct must lie in (0, 1]");
  if (opt.min_valid_days < 1) throw ValidationError("preprocess: min_valid_days must be >= 1");
  if (opt.max_invalid_minutes < 0) throw ValidationError("preprocess: max_invalid_minutes must be >= 0");
  const bool has_mask = !data.invalid.empty();
  if (has_mask && data.invalid.size() != static_cast<std::size_t>(data.n()))
    throw ValidationError("preprocess: invalid mask does not match subjects");

  std::vector<double> all;
  all.reserve(static_cast<std::size_t>(data.n()) * data.J() * data.T());
  for (const auto& w : data.W) all.insert(all.end(), w.data(), w.data() + w.size());
  const double cap = empirical_quantile(all, opt.winsorize_pct);

  PreprocessReport rep;
  rep.cap = cap;
  std::vector<std::vector<int>> kept_days(data.n());
  for (int i = 0; i < data.n(); ++i) {
    for (int j = 0; j < data.J(); ++j) {
      const long bad = has_mask ? static_cast<long>((data.invalid[i].row(j).array() != 0).count()) : 0;
      if (bad > opt.max_invalid_minutes) {
        ++rep.dropped_days;
      } else {
        kept_days[i].push_back(j);
      }
    }
    ++rep.valid_day_histogram[static_cast<int>(kept_days[i].size())];
  }

  std::vector<int> keep;
  int common = std::numeric_limits<int>::max();
  for (int i = 0; i < data.n(); ++i) {
    if (static_cast<int>(kept_days[i].size()) >= opt.min_valid_days) {
      keep.push_back(i);
      common = std::min(common, static_cast<int>(kept_days[i].size()));
    } else {
      rep.dropped_subjects.push_back(data.subject_ids.empty() ? std::to_string(i + 1) : data.subject_ids[i]);
    }
  }
  if (keep.empty()) {
    std::ostringstream msg;
    msg << "preprocess: all " << data.n() << " subjects dropped (need " << opt.min_valid_days
        << " valid days); valid-day histogram:";
    for (const auto& [days, count] : rep.valid_day_histogram) msg << ' ' << days << "d=" << count;
    throw ValidationError(msg.str());
  }

  FunctionalDataset out;
  out.grid = data.grid;
  out.covariate_names = data.covariate_names;
  out.Z.resize(static_cast<Eigen::Index>(keep.size()), data.p());
  out.Y.resize(static_cast<Eigen::Index>(keep.size()));
  if (data.X_true) out.X_true = Eigen::MatrixXd(static_cast<Eigen::Index>(keep.size()), data.T());
  for (std::size_t m = 0; m < keep.size(); ++m) {
    const int i = keep[m];
    const auto r = static_cast<Eigen::Index>(m);
    Eigen::MatrixXd w(common, data.T());
    for (int j = 0; j < common; ++j) w.row(j) = data.W[i].row(kept_days[i][j]);
    for (Eigen::Index k = 0; k < w.size(); ++k) {
      if (w.data()[k] > cap) {
        w.data()[k] = cap;
        ++rep.capped_values;
      }
    }
    out.W.push_back(std::move(w));
    out.Z.row(r) = data.Z.row(i);
    out.Y[r] = data.Y[i];
    if (data.X_true) out.X_true->row(r) = data.X_true->row(i);
    if (!data.subject_ids.empty()) out.subject_ids.push_back(data.subject_ids[i]);
  }
  rep.replicates = common;
  if (report) *report = std::move(rep);
  return out;
}

FunctionalDataset downsample(const FunctionalDataset& data, int factor) {
  data.validate();
  if (factor < 1) throw ValidationError("downsample: factor must be >= 1");
  if (factor == 1) return data;
  const int T = data.T();
  const int blocks = (T + factor - 1) / factor;
  if (blocks < 2) throw ValidationError("downsample: factor leaves fewer than two grid points");
  Eigen::MatrixXd avg = Eigen::MatrixXd::Zero(T, blocks);
  for (int b = 0; b < blocks; ++b) {
    const int lo = b * factor;
    const int hi = std::min(T, lo + factor);
    avg.block(lo, b, hi - lo, 1).setConstant(1.0 / (hi - lo));
  }
  FunctionalDataset out = data;
  out.invalid.clear();
  out.grid = (data.grid.transpose() * avg).transpose();
  for (auto& w : out.W) w = w * avg;
  if (out.X_true) *out.X_true = *out.X_true * avg;
  return out;
}

}  // namespace sofqr
