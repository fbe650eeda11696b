#pragma once

#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "twistpf/csv.hpp"
#include "twistpf/pmcmc.hpp"
#include "twistpf/ssm.hpp"

namespace twistpf {

inline bool operator==(const PriorTerm& a, const PriorTerm& b) {
  return a.family == b.family && a.a == b.a && a.b == b.b;
}

// Flat key-value run configuration with nested sections; see configs/ for
// annotated examples. Parameter order defines the Theta layout:
//   range_bearing:  [q2, sigma1_sq, sigma2_sq]
//   rss:            [lambda_1, rho_1, ..., lambda_B, rho_B, q2, sigma2]
//   linear_gaussian (1-d): [q]
struct RunConfig {
  std::string model = "range_bearing";
  int t = 100;
  double dt = 1.0;
  std::vector<std::pair<std::string, double>> params;

  // rss extras
  std::vector<double> lambda, rho;
  std::vector<std::pair<double, double>> stations;
  double vis_prob = 0.6;

  // linear_gaussian (1-d) extras; q is the estimated parameter
  double lin_a = 1.0, lin_h = 1.0, lin_r = 1.0, lin_nu0 = 0.0, lin_p0 = 1.0;

  // filter grid
  std::vector<std::string> filters{"bspf"};
  std::string resampling = "systematic";
  std::vector<int> n_values{100};
  std::vector<int> l_values{0};
  int replicates = 30;
  bool relinearize = true;

  std::vector<std::string> data_paths;

  // pmmh
  int pmmh_iterations = 1000;
  int pmmh_burn_in = 0;
  std::vector<std::vector<int>> blocks;  // 0-based parameter indices
  std::vector<double> proposal_sd;
  std::vector<double> theta0;
  std::vector<PriorTerm> priors;

  // track
  std::vector<double> track_theta;
  std::string track_chain;
  int track_burn_in = 0;

  bool operator==(const RunConfig&) const = default;
};

namespace cfgdetail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s, char sep = ',') {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::string cur;
  int depth = 0;
  for (char c : s) {
    if (c == '(') ++depth;
    if (c == ')') --depth;
    if (c == sep && depth == 0) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

inline double to_double(const std::string& s) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw ConfigError("bad number: " + s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("bad number: " + s);
  }
}

inline int to_int(const std::string& s) {
  try {
    std::size_t pos = 0;
    const int v = std::stoi(s, &pos);
    if (pos != s.size()) throw ConfigError("bad integer: " + s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("bad integer: " + s);
  }
}

inline std::vector<double> to_doubles(const std::string& s) {
  std::vector<double> out;
  for (const auto& item : split_list(s)) out.push_back(to_double(item));
  return out;
}

inline std::vector<int> to_ints(const std::string& s) {
  std::vector<int> out;
  for (const auto& item : split_list(s)) out.push_back(to_int(item));
  return out;
}

inline PriorTerm to_prior(const std::string& s) {
  const auto open = s.find('(');
  const auto close = s.rfind(')');
  if (open == std::string::npos || close == std::string::npos || close < open)
    throw ConfigError("bad prior: " + s);
  const std::string name = trim(s.substr(0, open));
  const auto args = split_list(s.substr(open + 1, close - open - 1));
  if (args.size() != 2) throw ConfigError("prior needs two hyperparameters: " + s);
  PriorTerm p;
  p.a = to_double(args[0]);
  p.b = to_double(args[1]);
  if (name == "inverse_gamma") p.family = PriorFamily::inverse_gamma;
  else if (name == "gamma") p.family = PriorFamily::gamma;
  else if (name == "normal") p.family = PriorFamily::normal;
  else throw ConfigError("unknown prior family: " + name);
  if ((p.family != PriorFamily::normal && (p.a <= 0.0 || p.b <= 0.0)) ||
      (p.family == PriorFamily::normal && p.b <= 0.0))
    throw ConfigError("invalid prior hyperparameters: " + s);
  return p;
}

inline std::string prior_str(const PriorTerm& p) {
  std::string name = p.family == PriorFamily::inverse_gamma ? "inverse_gamma"
                     : p.family == PriorFamily::gamma       ? "gamma"
                                                            : "normal";
  return name + "(" + detail::fmt_double(p.a) + "," + detail::fmt_double(p.b) + ")";
}

template <typename T, typename F>
std::string join(const std::vector<T>& v, F to_str, const std::string& sep = ",") {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += sep;
    out += to_str(v[i]);
  }
  return out;
}

}  // namespace cfgdetail

inline void validate_config(const RunConfig& cfg) {
  static const std::vector<std::string> kModels{"range_bearing", "rss", "linear_gaussian"};
  static const std::vector<std::string> kFilters{"bspf", "ekfpf", "twisted-bspf-local",
                                                 "twisted-ekfpf-local", "twisted-bspf-mode"};
  auto contains = [](const auto& v, const std::string& s) {
    for (const auto& x : v)
      if (x == s) return true;
    return false;
  };
  if (!contains(kModels, cfg.model)) throw ConfigError("unknown model: " + cfg.model);
  for (const auto& f : cfg.filters)
    if (!contains(kFilters, f)) throw ConfigError("unknown filter: " + f);
  if (cfg.resampling != "multinomial" && cfg.resampling != "systematic")
    throw ConfigError("unknown resampling: " + cfg.resampling);
  if (cfg.t < 0) throw ConfigError("t must be nonnegative");
  for (int n : cfg.n_values)
    if (n < 1) throw ConfigError("n must be at least 1");
  for (int l : cfg.l_values)
    if (l < 0) throw ConfigError("l must be nonnegative");
  if (cfg.replicates < 1) throw ConfigError("replicates must be at least 1");
}

inline RunConfig parse_config(const std::string& text) {
  using namespace cfgdetail;
  RunConfig cfg;
  cfg.params.clear();
  cfg.filters.clear();
  cfg.n_values.clear();
  cfg.l_values.clear();
  std::string section;
  std::istringstream in(text);
  std::string raw;
  while (std::getline(in, raw)) {
    std::string line = trim(raw);
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = trim(line.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[' && line.back() == ']') {
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("expected key = value: " + line);
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));

    if (section.empty()) {
      if (key == "model") cfg.model = value;
      else if (key == "t") cfg.t = to_int(value);
      else if (key == "dt") cfg.dt = to_double(value);
      else throw ConfigError("unknown top-level key: " + key);
    } else if (section == "params") {
      cfg.params.emplace_back(key, to_double(value));
    } else if (section == "rss") {
      if (key == "lambda") cfg.lambda = to_doubles(value);
      else if (key == "rho") cfg.rho = to_doubles(value);
      else if (key == "vis_prob") cfg.vis_prob = to_double(value);
      else if (key == "stations") {
        cfg.stations.clear();
        for (const auto& item : split_list(value)) {
          const auto semi = item.find(';');
          if (semi == std::string::npos) throw ConfigError("station needs x;y: " + item);
          cfg.stations.emplace_back(to_double(trim(item.substr(0, semi))),
                                    to_double(trim(item.substr(semi + 1))));
        }
      } else throw ConfigError("unknown [rss] key: " + key);
    } else if (section == "linear") {
      if (key == "a") cfg.lin_a = to_double(value);
      else if (key == "h") cfg.lin_h = to_double(value);
      else if (key == "r") cfg.lin_r = to_double(value);
      else if (key == "nu0") cfg.lin_nu0 = to_double(value);
      else if (key == "p0") cfg.lin_p0 = to_double(value);
      else throw ConfigError("unknown [linear] key: " + key);
    } else if (section == "filter") {
      if (key == "filters") {
        for (const auto& f : split_list(value)) cfg.filters.push_back(f);
      } else if (key == "resampling") cfg.resampling = value;
      else if (key == "n") cfg.n_values = to_ints(value);
      else if (key == "l") cfg.l_values = to_ints(value);
      else if (key == "replicates") cfg.replicates = to_int(value);
      else if (key == "relinearize") cfg.relinearize = (value == "true" || value == "1");
      else throw ConfigError("unknown [filter] key: " + key);
    } else if (section == "data") {
      if (key == "paths") {
        for (const auto& p : split_list(value)) cfg.data_paths.push_back(p);
      } else throw ConfigError("unknown [data] key: " + key);
    } else if (section == "pmmh") {
      if (key == "iterations") cfg.pmmh_iterations = to_int(value);
      else if (key == "burn_in") cfg.pmmh_burn_in = to_int(value);
      else if (key == "blocks") {
        cfg.blocks.clear();
        for (const auto& group : split_list(value, '|')) {
          std::vector<int> block;
          for (int idx : to_ints(group)) block.push_back(idx - 1);  // 1-based in file
          cfg.blocks.push_back(std::move(block));
        }
      } else if (key == "proposal_sd") cfg.proposal_sd = to_doubles(value);
      else if (key == "theta0") cfg.theta0 = to_doubles(value);
      else if (key == "priors") {
        cfg.priors.clear();
        for (const auto& p : split_list(value)) cfg.priors.push_back(to_prior(p));
      } else throw ConfigError("unknown [pmmh] key: " + key);
    } else if (section == "track") {
      if (key == "theta") cfg.track_theta = to_doubles(value);
      else if (key == "chain") cfg.track_chain = value;
      else if (key == "burn_in") cfg.track_burn_in = to_int(value);
      else throw ConfigError("unknown [track] key: " + key);
    } else {
      throw ConfigError("unknown section: [" + section + "]");
    }
  }
  if (cfg.filters.empty()) cfg.filters.push_back("bspf");
  if (cfg.n_values.empty()) cfg.n_values.push_back(100);
  if (cfg.l_values.empty()) cfg.l_values.push_back(0);
  validate_config(cfg);
  return cfg;
}

inline std::string emit_config(const RunConfig& cfg) {
  using namespace cfgdetail;
  std::ostringstream out;
  auto d = [](double v) { return detail::fmt_double(v); };
  out << "model = " << cfg.model << "\n";
  out << "t = " << cfg.t << "\n";
  out << "dt = " << d(cfg.dt) << "\n";
  out << "\n[params]\n";
  for (const auto& [name, value] : cfg.params) out << name << " = " << d(value) << "\n";
  if (cfg.model == "rss") {
    out << "\n[rss]\n";
    out << "lambda = " << join(cfg.lambda, d) << "\n";
    out << "rho = " << join(cfg.rho, d) << "\n";
    out << "stations = "
        << join(cfg.stations, [&](const std::pair<double, double>& s) {
             return d(s.first) + ";" + d(s.second);
           })
        << "\n";
    out << "vis_prob = " << d(cfg.vis_prob) << "\n";
  }
  if (cfg.model == "linear_gaussian") {
    out << "\n[linear]\n";
    out << "a = " << d(cfg.lin_a) << "\n";
    out << "h = " << d(cfg.lin_h) << "\n";
    out << "r = " << d(cfg.lin_r) << "\n";
    out << "nu0 = " << d(cfg.lin_nu0) << "\n";
    out << "p0 = " << d(cfg.lin_p0) << "\n";
  }
  out << "\n[filter]\n";
  out << "filters = " << join(cfg.filters, [](const std::string& s) { return s; }) << "\n";
  out << "resampling = " << cfg.resampling << "\n";
  out << "n = " << join(cfg.n_values, [](int v) { return std::to_string(v); }) << "\n";
  out << "l = " << join(cfg.l_values, [](int v) { return std::to_string(v); }) << "\n";
  out << "replicates = " << cfg.replicates << "\n";
  out << "relinearize = " << (cfg.relinearize ? "true" : "false") << "\n";
  if (!cfg.data_paths.empty()) {
    out << "\n[data]\n";
    out << "paths = " << join(cfg.data_paths, [](const std::string& s) { return s; }) << "\n";
  }
  if (!cfg.priors.empty() || !cfg.blocks.empty()) {
    out << "\n[pmmh]\n";
    out << "iterations = " << cfg.pmmh_iterations << "\n";
    out << "burn_in = " << cfg.pmmh_burn_in << "\n";
    if (!cfg.blocks.empty())
      out << "blocks = "
          << join(cfg.blocks,
                  [](const std::vector<int>& b) {
                    return cfgdetail::join(
                        b, [](int idx) { return std::to_string(idx + 1); });
                  },
                  "|")
          << "\n";
    if (!cfg.proposal_sd.empty()) out << "proposal_sd = " << join(cfg.proposal_sd, d) << "\n";
    if (!cfg.theta0.empty()) out << "theta0 = " << join(cfg.theta0, d) << "\n";
    if (!cfg.priors.empty())
      out << "priors = " << join(cfg.priors, [](const PriorTerm& p) { return cfgdetail::prior_str(p); })
          << "\n";
  }
  if (!cfg.track_theta.empty() || !cfg.track_chain.empty()) {
    out << "\n[track]\n";
    if (!cfg.track_theta.empty()) out << "theta = " << join(cfg.track_theta, d) << "\n";
    if (!cfg.track_chain.empty()) out << "chain = " << cfg.track_chain << "\n";
    out << "burn_in = " << cfg.track_burn_in << "\n";
  }
  return out.str();
}

}  // namespace twistpf
