#include "satomil/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include "satomil/error.hpp"

namespace satomil {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

void append_double(std::string& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out += buf;
}

}  // namespace

void GenSpec::validate() const {
  if (k_classes < 2) throw ContractError("gen: k_classes must be >= 2");
  if (input_dim < 1) throw ContractError("gen: input_dim must be >= 1");
  if (!(class_sep > 0.0)) throw ContractError("gen: class separation must be > 0");
  if (!(noise_sigma >= 0.0)) throw ContractError("gen: noise sigma must be >= 0");
  if (bag_size_min < 1 || bag_size_min > bag_size_max) {
    throw ContractError("gen: need 1 <= bag_size_min <= bag_size_max");
  }
  if (low_class_dist == LowClassDist::Geometric && !(geometric_rho > 0.0 && geometric_rho <= 1.0)) {
    throw ContractError("gen: geometric rho must lie in (0, 1]");
  }
  if (bags_per_class < 1) throw ContractError("gen: bags_per_class must be >= 1");
}

nlohmann::json to_json(const GenSpec& s) {
  return {{"k_classes", s.k_classes},
          {"input_dim", s.input_dim},
          {"class_sep", s.class_sep},
          {"noise_sigma", s.noise_sigma},
          {"bag_size_min", s.bag_size_min},
          {"bag_size_max", s.bag_size_max},
          {"low_class_dist", s.low_class_dist == LowClassDist::Uniform ? "uniform" : "geometric"},
          {"geometric_rho", s.geometric_rho},
          {"bags_per_class", s.bags_per_class},
          {"seed", s.seed}};
}

std::map<int, std::size_t> Dataset::class_counts() const {
  std::map<int, std::size_t> counts;
  for (int y = 1; y <= k_classes; ++y) counts[y] = 0;
  for (const Bag& b : bags) ++counts[b.label];
  return counts;
}

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
  Dataset out{k_classes, input_dim, {}};
  out.bags.reserve(indices.size());
  for (std::size_t i : indices) out.bags.push_back(bags.at(i));
  return out;
}

void Dataset::validate() const {
  if (k_classes < 2) throw ContractError("dataset: k_classes must be >= 2");
  for (const Bag& b : bags) validate_bag(b, k_classes, input_dim);
}

std::uint64_t bag_seed(std::uint64_t seed, std::uint64_t counter) {
  return splitmix64(splitmix64(seed) ^ (counter + 1));
}

std::vector<double> class_direction(std::size_t input_dim) {
  return std::vector<double>(input_dim, 1.0 / std::sqrt(static_cast<double>(input_dim)));
}

Dataset generate(const GenSpec& spec) {
  spec.validate();
  const std::vector<double> u = class_direction(spec.input_dim);
  Dataset data{spec.k_classes, spec.input_dim, {}};
  data.bags.reserve(static_cast<std::size_t>(spec.k_classes) * spec.bags_per_class);

  std::uint64_t counter = 0;
  for (int label = 1; label <= spec.k_classes; ++label) {
    std::vector<double> low_weights;
    for (int c = 1; c <= label; ++c) {
      low_weights.push_back(spec.low_class_dist == LowClassDist::Uniform
                                ? 1.0
                                : std::pow(spec.geometric_rho, c - 1));
    }
    for (std::size_t b = 0; b < spec.bags_per_class; ++b, ++counter) {
      std::mt19937_64 rng(bag_seed(spec.seed, counter));
      std::uniform_int_distribution<std::size_t> size_dist(spec.bag_size_min, spec.bag_size_max);
      const std::size_t n = size_dist(rng);
      std::uniform_int_distribution<std::size_t> slot_dist(0, n - 1);
      const std::size_t forced = slot_dist(rng);
      std::discrete_distribution<int> low_dist(low_weights.begin(), low_weights.end());
      std::normal_distribution<double> noise(0.0, 1.0);

      Bag bag;
      char id[32];
      std::snprintf(id, sizeof id, "bag-%05llu", static_cast<unsigned long long>(counter));
      bag.id = id;
      bag.label = label;
      std::vector<int> labels(n);
      for (std::size_t j = 0; j < n; ++j) {
        labels[j] = j == forced ? label : 1 + low_dist(rng);
        std::vector<double> x(spec.input_dim);
        const double offset = labels[j] * spec.class_sep;
        for (std::size_t d = 0; d < spec.input_dim; ++d) {
          x[d] = offset * u[d] + spec.noise_sigma * noise(rng);
        }
        bag.instances.push_back(std::move(x));
      }
      bag.instance_labels = std::move(labels);
      validate_bag(bag, spec.k_classes, spec.input_dim);
      data.bags.push_back(std::move(bag));
    }
  }
  return data;
}

Dataset oversample(const Dataset& data, std::uint64_t seed) {
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < data.bags.size(); ++i) by_class[data.bags[i].label].push_back(i);
  for (int y = 1; y <= data.k_classes; ++y) {
    if (by_class[y].empty()) {
      throw ContractError("oversample: class " + std::to_string(y) + " has no bags");
    }
  }
  std::size_t target = 0;
  for (const auto& [y, idx] : by_class) target = std::max(target, idx.size());

  Dataset out = data;
  std::mt19937_64 rng(splitmix64(seed ^ 0x6F76657273616D70ULL));
  for (const auto& [y, idx] : by_class) {
    std::uniform_int_distribution<std::size_t> pick(0, idx.size() - 1);
    for (std::size_t have = idx.size(); have < target; ++have) {
      out.bags.push_back(data.bags[idx[pick(rng)]]);
    }
  }
  return out;
}

std::vector<Fold> kfold(const Dataset& data, std::size_t folds, std::uint64_t seed) {
  if (folds < 2) throw ContractError("kfold: need at least 2 folds");
  if (folds > data.bags.size()) {
    throw ContractError("kfold: " + std::to_string(folds) + " folds for " +
                        std::to_string(data.bags.size()) + " bags");
  }
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < data.bags.size(); ++i) by_class[data.bags[i].label].push_back(i);

  std::mt19937_64 rng(splitmix64(seed ^ 0x6B666F6C64ULL));
  std::vector<std::vector<std::size_t>> tests(folds);
  std::size_t next = 0;
  for (auto& [y, idx] : by_class) {
    if (idx.size() < folds) {
      std::cerr << "warning: class " << y << " has " << idx.size() << " bags for " << folds
                << " folds; some test folds will lack it\n";
    }
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t i : idx) {
      tests[next].push_back(i);
      next = (next + 1) % folds;
    }
  }

  std::vector<Fold> out(folds);
  for (std::size_t f = 0; f < folds; ++f) {
    std::sort(tests[f].begin(), tests[f].end());
    out[f].test = tests[f];
    for (std::size_t g = 0; g < folds; ++g) {
      if (g != f) out[f].train.insert(out[f].train.end(), tests[g].begin(), tests[g].end());
    }
    std::sort(out[f].train.begin(), out[f].train.end());
  }
  return out;
}

// ---- file I/O -----------------------------------------------------------

void write_dataset(std::ostream& out, const Dataset& data, const nlohmann::json& generator) {
  nlohmann::json header = {{"format", kDatasetFormat},
                           {"k_classes", data.k_classes},
                           {"input_dim", data.input_dim}};
  if (!generator.is_null()) header["generator"] = generator;
  out << header.dump() << '\n';

  std::string line;
  for (const Bag& b : data.bags) {
    line.clear();
    line += "{\"id\":";
    line += nlohmann::json(b.id).dump();
    line += ",\"label\":" + std::to_string(b.label) + ",\"instances\":[";
    for (std::size_t j = 0; j < b.instances.size(); ++j) {
      if (j) line += ',';
      line += '[';
      for (std::size_t d = 0; d < b.instances[j].size(); ++d) {
        if (d) line += ',';
        append_double(line, b.instances[j][d]);
      }
      line += ']';
    }
    line += ']';
    if (b.instance_labels) {
      line += ",\"instance_labels\":[";
      for (std::size_t j = 0; j < b.instance_labels->size(); ++j) {
        if (j) line += ',';
        line += std::to_string((*b.instance_labels)[j]);
      }
      line += ']';
    }
    line += "}\n";
    out << line;
  }
}

void write_dataset(const std::filesystem::path& path, const Dataset& data,
                   const nlohmann::json& generator) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write dataset " + path.string());
  write_dataset(out, data, generator);
}

Dataset read_dataset(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  Dataset data;
  bool have_header = false;

  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(lineno, std::string("invalid JSON: ") + e.what());
    }

    if (!have_header) {
      if (!j.is_object() || j.value("format", "") != kDatasetFormat) {
        throw ParseError(lineno, std::string("header must declare format ") + kDatasetFormat);
      }
      try {
        data.k_classes = j.at("k_classes").get<int>();
        data.input_dim = j.at("input_dim").get<std::size_t>();
      } catch (const nlohmann::json::exception& e) {
        throw ParseError(lineno, std::string("bad header: ") + e.what());
      }
      if (data.k_classes < 2) throw ParseError(lineno, "k_classes must be >= 2");
      if (data.input_dim < 1) throw ParseError(lineno, "input_dim must be >= 1");
      have_header = true;
      continue;
    }

    Bag bag;
    try {
      bag.id = j.at("id").get<std::string>();
      bag.label = j.at("label").get<int>();
      bag.instances = j.at("instances").get<std::vector<std::vector<double>>>();
      if (j.contains("instance_labels")) {
        bag.instance_labels = j.at("instance_labels").get<std::vector<int>>();
      }
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(lineno, std::string("bad bag record: ") + e.what());
    }
    try {
      validate_bag(bag, data.k_classes, data.input_dim);
    } catch (const std::invalid_argument& e) {
      throw ParseError(lineno, e.what());
    }
    data.bags.push_back(std::move(bag));
  }
  if (!have_header) throw ParseError(lineno, "missing header line");
  return data;
}

Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read dataset " + path.string());
  return read_dataset(in);
}

}  // namespace satomil
