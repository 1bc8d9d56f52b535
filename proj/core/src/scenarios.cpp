#include <algorithm>
#include <functional>
#include <map>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

#include "blockipm/opf.hpp"

namespace blockipm::opf {

namespace {

// Connectivity of the in-service network minus one scenario's outages.
bool connected(const CaseData& cs, const std::vector<index_t>& live,
               const std::vector<index_t>& outaged) {
  const index_t nbus = index_t(cs.bus.size());
  std::vector<index_t> parent(static_cast<size_t>(nbus));
  std::iota(parent.begin(), parent.end(), 0);
  std::function<index_t(index_t)> find = [&](index_t a) {
    while (parent[size_t(a)] != a) {
      parent[size_t(a)] = parent[size_t(parent[size_t(a)])];
      a = parent[size_t(a)];
    }
    return a;
  };
  std::map<int, index_t> bus_of_id;
  for (index_t b = 0; b < nbus; ++b) bus_of_id[cs.bus[size_t(b)].id] = b;
  for (index_t l : live) {
    if (std::find(outaged.begin(), outaged.end(), l) != outaged.end()) continue;
    const auto& br = cs.branch[size_t(l)];
    index_t a = find(bus_of_id.at(br.from)), b = find(bus_of_id.at(br.to));
    if (a != b) parent[size_t(a)] = b;
  }
  const index_t root = find(0);
  for (index_t b = 1; b < nbus; ++b)
    if (find(b) != root) return false;
  return true;
}

}  // namespace

ScenarioSet generate_scenarios(const CaseData& cs, index_t N, double sigma,
                               const std::vector<index_t>& contingencies, std::uint64_t seed) {
  if (N < 1) throw std::invalid_argument("generate_scenarios: N must be >= 1");
  if (sigma < 0) throw std::invalid_argument("generate_scenarios: sigma must be >= 0");
  const index_t nbus = index_t(cs.bus.size());

  ScenarioSet s;
  s.seed = seed;
  s.sigma = sigma;
  s.N = N;
  s.multipliers = Matrix(nbus, N, 1.0);
  s.outages.assign(size_t(N), {});

  if (sigma > 0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(1.0, sigma);
    for (index_t i = 0; i < N; ++i)
      for (index_t b = 0; b < nbus; ++b)
        s.multipliers(b, i) = std::clamp(dist(rng), 0.5, 1.5);
  }

  std::vector<index_t> live;
  for (size_t l = 0; l < cs.branch.size(); ++l)
    if (cs.branch[l].status) live.push_back(index_t(l));

  for (size_t k = 0; k < contingencies.size(); ++k) {
    const index_t br = contingencies[k];
    if (br < 0 || br >= index_t(cs.branch.size()) || !cs.branch[size_t(br)].status)
      throw std::invalid_argument("contingency names an unknown or out-of-service branch");
    s.outages[size_t(index_t(k) % N)].push_back(br);
  }
  for (index_t i = 0; i < N; ++i)
    if (!connected(cs, live, s.outages[size_t(i)]))
      throw std::runtime_error("scenario " + std::to_string(i) +
                               ": contingency disconnects the network");
  return s;
}

std::string ScenarioSet::to_json() const {
  nlohmann::json j;
  j["seed"] = seed;
  j["sigma"] = sigma;
  j["N"] = N;
  std::vector<std::vector<double>> mult(static_cast<size_t>(N));
  for (index_t i = 0; i < N; ++i)
    mult[size_t(i)].assign(multipliers.col(i), multipliers.col(i) + multipliers.rows());
  j["multipliers"] = mult;
  j["outages"] = outages;
  return j.dump(2);
}

ScenarioSet ScenarioSet::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  ScenarioSet s;
  s.seed = j.at("seed").get<std::uint64_t>();
  s.sigma = j.at("sigma").get<double>();
  s.N = j.at("N").get<index_t>();
  auto mult = j.at("multipliers").get<std::vector<std::vector<double>>>();
  if (index_t(mult.size()) != s.N) throw std::runtime_error("scenario json: bad multipliers");
  const index_t nbus = mult.empty() ? 0 : index_t(mult[0].size());
  s.multipliers = Matrix(nbus, s.N);
  for (index_t i = 0; i < s.N; ++i) {
    if (index_t(mult[size_t(i)].size()) != nbus)
      throw std::runtime_error("scenario json: ragged multipliers");
    std::copy(mult[size_t(i)].begin(), mult[size_t(i)].end(), s.multipliers.col(i));
  }
  s.outages = j.at("outages").get<std::vector<std::vector<index_t>>>();
  if (index_t(s.outages.size()) != s.N) throw std::runtime_error("scenario json: bad outages");
  return s;
}

}  // namespace blockipm::opf
