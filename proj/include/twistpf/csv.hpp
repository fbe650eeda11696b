#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "twistpf/pmcmc.hpp"
#include "twistpf/ssm.hpp"

namespace twistpf {

namespace detail {
inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}
}  // namespace detail

// Dataset CSV: header `k,y1,...,ym[,x1..xd]`, one row per time index.
// Observation components absent at a step (RSS visibility) are written as
// empty fields.
inline void write_dataset(const std::string& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw ConfigError("write_dataset: cannot open " + path);
  const int m = data.obs_cols;
  const int dx = data.truth.empty() ? 0 : static_cast<int>(data.truth[0].size());
  out << "k";
  for (int c = 1; c <= m; ++c) out << ",y" << c;
  for (int c = 1; c <= dx; ++c) out << ",x" << c;
  out << "\n";
  for (std::size_t k = 0; k < data.obs.size(); ++k) {
    out << k;
    std::vector<std::string> cells(m);
    if (!data.visible.empty()) {
      const auto& set = data.visible[k];
      for (std::size_t j = 0; j < set.size(); ++j)
        cells[set[j]] = detail::fmt_double(data.obs[k](j));
    } else {
      for (int c = 0; c < m; ++c) cells[c] = detail::fmt_double(data.obs[k](c));
    }
    for (const auto& cell : cells) out << ',' << cell;
    if (dx > 0)
      for (int c = 0; c < dx; ++c) out << ',' << detail::fmt_double(data.truth[k](c));
    out << "\n";
  }
}

inline Dataset read_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("read_dataset: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("read_dataset: empty file " + path);
  const auto header = detail::split(line, ',');
  int m = 0, dx = 0;
  for (std::size_t c = 1; c < header.size(); ++c) {
    if (!header[c].empty() && header[c][0] == 'y') ++m;
    if (!header[c].empty() && header[c][0] == 'x') ++dx;
  }
  Dataset data;
  data.obs_cols = m;
  bool any_missing = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = detail::split(line, ',');
    if (static_cast<int>(cells.size()) != 1 + m + dx)
      throw ConfigError("read_dataset: bad column count in " + path);
    std::vector<int> set;
    std::vector<double> vals;
    for (int c = 0; c < m; ++c) {
      if (cells[1 + c].empty()) {
        any_missing = true;
      } else {
        set.push_back(c);
        vals.push_back(std::stod(cells[1 + c]));
      }
    }
    Vector y(vals.size());
    for (std::size_t j = 0; j < vals.size(); ++j) y(j) = vals[j];
    data.obs.push_back(std::move(y));
    data.visible.push_back(std::move(set));
    if (dx > 0) {
      Vector x(dx);
      for (int c = 0; c < dx; ++c) x(c) = std::stod(cells[1 + m + c]);
      data.truth.push_back(std::move(x));
    }
  }
  if (!any_missing) data.visible.clear();
  return data;
}

// Chain CSV: `iter,logZ,acc_b1..acc_bB,theta_1..theta_d`.
inline void write_chain(const std::string& path, const Chain& chain) {
  std::ofstream out(path);
  if (!out) throw ConfigError("write_chain: cannot open " + path);
  const int blocks = chain.accepted.empty() ? 0 : static_cast<int>(chain.accepted[0].size());
  out << "iter,logZ";
  for (int b = 1; b <= blocks; ++b) out << ",acc_b" << b;
  for (Eigen::Index c = 1; c <= chain.draws.cols(); ++c) out << ",theta_" << c;
  out << "\n";
  for (Eigen::Index i = 0; i < chain.draws.rows(); ++i) {
    out << i << ',' << detail::fmt_double(chain.log_z[i]);
    for (int b = 0; b < blocks; ++b) out << ',' << static_cast<int>(chain.accepted[i][b]);
    for (Eigen::Index c = 0; c < chain.draws.cols(); ++c)
      out << ',' << detail::fmt_double(chain.draws(i, c));
    out << "\n";
  }
}

inline Chain read_chain(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("read_chain: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("read_chain: empty file " + path);
  const auto header = detail::split(line, ',');
  int blocks = 0, dim = 0;
  for (const auto& h : header) {
    if (h.rfind("acc_b", 0) == 0) ++blocks;
    if (h.rfind("theta_", 0) == 0) ++dim;
  }
  std::vector<std::vector<double>> rows;
  Chain chain;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = detail::split(line, ',');
    chain.log_z.push_back(std::stod(cells[1]));
    std::vector<std::uint8_t> acc(blocks);
    for (int b = 0; b < blocks; ++b) acc[b] = static_cast<std::uint8_t>(std::stoi(cells[2 + b]));
    chain.accepted.push_back(std::move(acc));
    std::vector<double> row(dim);
    for (int c = 0; c < dim; ++c) row[c] = std::stod(cells[2 + blocks + c]);
    rows.push_back(std::move(row));
  }
  chain.draws.resize(rows.size(), dim);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (int c = 0; c < dim; ++c) chain.draws(i, c) = rows[i][c];
  return chain;
}

// Metrics CSV: `metric,value` rows.
inline void write_metrics(const std::string& path,
                          const std::vector<std::pair<std::string, double>>& rows) {
  std::ofstream out(path);
  if (!out) throw ConfigError("write_metrics: cannot open " + path);
  out << "metric,value\n";
  for (const auto& [name, value] : rows) out << name << ',' << detail::fmt_double(value) << "\n";
}

// Autocorrelation CSV: `lag,ac` rows.
inline void write_autocorr(const std::string& path, const std::vector<double>& ac) {
  std::ofstream out(path);
  if (!out) throw ConfigError("write_autocorr: cannot open " + path);
  out << "lag,ac\n";
  for (std::size_t l = 0; l < ac.size(); ++l)
    out << l << ',' << detail::fmt_double(ac[l]) << "\n";
}

}  // namespace twistpf
