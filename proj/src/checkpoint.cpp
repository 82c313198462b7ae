#include "satomil/checkpoint.hpp"

#include <fstream>
#include <unordered_map>

#include "satomil/error.hpp"

namespace satomil {

nlohmann::json checkpoint_json(const BagModel& model, const nlohmann::json& extra) {
  nlohmann::json tensors = nlohmann::json::array();
  for (const ad::Parameter* p : model.parameters()) {
    tensors.push_back({{"name", p->name},
                       {"rows", p->value.rows()},
                       {"cols", p->value.cols()},
                       {"data", std::vector<double>(p->value.data().begin(), p->value.data().end())}});
  }
  nlohmann::json j = {{"format", kCheckpointFormat},
                      {"kind", to_string(model.kind())},
                      {"config", to_json(model.config())},
                      {"tensors", std::move(tensors)}};
  if (!extra.is_null()) j["run"] = extra;
  return j;
}

std::unique_ptr<BagModel> model_from_checkpoint(const nlohmann::json& ckpt) {
  if (!ckpt.is_object() || ckpt.value("format", "") != kCheckpointFormat) {
    throw ParseError(1, std::string("not a ") + kCheckpointFormat + " checkpoint");
  }
  try {
    auto model = make_model(parse_model_kind(ckpt.at("kind").get<std::string>()),
                            sat_config_from_json(ckpt.at("config")));
    std::unordered_map<std::string, const nlohmann::json*> by_name;
    for (const auto& t : ckpt.at("tensors")) by_name[t.at("name").get<std::string>()] = &t;

    for (ad::Parameter* p : model->parameters()) {
      const auto it = by_name.find(p->name);
      if (it == by_name.end()) throw ParseError(1, "checkpoint lacks tensor '" + p->name + "'");
      const nlohmann::json& t = *it->second;
      const auto rows = t.at("rows").get<std::size_t>();
      const auto cols = t.at("cols").get<std::size_t>();
      if (rows != p->value.rows() || cols != p->value.cols()) {
        throw DimensionError("checkpoint tensor '" + p->name + "' has shape [" +
                             std::to_string(rows) + "x" + std::to_string(cols) + "], expected " +
                             p->value.shape_string());
      }
      p->value = ad::Tensor(rows, cols, t.at("data").get<std::vector<double>>());
      p->grad = ad::Tensor(rows, cols);
    }
    if (by_name.size() != model->parameters().size()) {
      throw ParseError(1, "checkpoint holds tensors the model does not know");
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(1, std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const BagModel& model,
                     const nlohmann::json& extra) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out << checkpoint_json(model, extra).dump() << '\n';
}

std::unique_ptr<BagModel> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(1, std::string("checkpoint is not JSON: ") + e.what());
  }
  return model_from_checkpoint(j);
}

void copy_parameters(const BagModel& from, BagModel& to) {
  const auto src = from.parameters();
  const auto dst = to.parameters();
  if (src.size() != dst.size()) throw ContractError("copy_parameters: models differ in structure");
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (!src[i]->value.same_shape(dst[i]->value)) {
      throw DimensionError("copy_parameters: shape mismatch for '" + src[i]->name + "'");
    }
    dst[i]->value = src[i]->value;
  }
}

}  // namespace satomil
