#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "rffi/errors.hpp"
#include "rffi/models.hpp"

namespace rffi {

namespace {

constexpr char kMagic[8] = {'R', 'F', 'F', 'I', 'C', 'K', 'P', '1'};

void append_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t read_u64(std::string_view bytes, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[at + i])) << (8 * i);
  return v;
}

nlohmann::json training_json(const TrainingMetadata& t) {
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  return {{"epochs", t.epochs},
          {"final_val_loss", num(t.final_val_loss)},
          {"best_val_loss", num(t.best_val_loss)},
          {"augmentation", t.augmentation},
          {"seed", t.seed}};
}

TrainingMetadata training_from_json(const nlohmann::json& j) {
  auto num = [&](const char* k) {
    return j.contains(k) && !j.at(k).is_null() ? j.at(k).get<double>() : std::numeric_limits<double>::quiet_NaN();
  };
  TrainingMetadata t;
  t.epochs = j.value("epochs", 0);
  t.final_val_loss = num("final_val_loss");
  t.best_val_loss = num("best_val_loss");
  t.augmentation = j.value("augmentation", std::string("untrained"));
  t.seed = j.value("seed", std::uint64_t{0});
  return t;
}

}  // namespace

std::string serialize_checkpoint(const TrainedModel& model) {
  nlohmann::json header;
  header["format"] = "rffi-checkpoint";
  header["version"] = 1;
  header["spec"] = to_json(model.spec);
  header["init_seed"] = model.init_seed;
  header["training"] = training_json(model.training);
  nlohmann::json params = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto* p : model.net->parameters()) {
    params.push_back({{"name", p->name}, {"shape", p->tensor.shape()}, {"offset", offset}, {"count", p->size()}});
    offset += p->size();
  }
  header["parameters"] = params;
  const std::string text = header.dump();

  std::string out(kMagic, sizeof kMagic);
  append_u64(out, text.size());
  out += text;
  out.reserve(out.size() + offset * 4);
  for (const auto* p : model.net->parameters()) {
    for (float v : p->tensor.data()) {
      const std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
      for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
    }
  }
  return out;
}

TrainedModel deserialize_checkpoint(std::string_view bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw DataError("not an rffi checkpoint (bad magic)");
  }
  const std::uint64_t header_len = read_u64(bytes, 8);
  if (header_len > bytes.size() - 16) throw DataError("checkpoint header truncated");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(16, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }
  const ModelSpec spec = model_spec_from_json(header.at("spec"));
  TrainedModel model = build_model(spec, header.value("init_seed", std::uint64_t{0}));
  model.training = training_from_json(header.value("training", nlohmann::json::object()));

  const std::size_t data_start = 16 + header_len;
  const auto& entries = header.at("parameters");
  auto& params = model.net->parameters();
  if (entries.size() != params.size()) throw DataError("checkpoint parameter count does not match its spec");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& e = entries[i];
    auto* p = params[i];
    if (e.at("name").get<std::string>() != p->name || e.at("shape").get<tn::Shape>() != p->tensor.shape()) {
      throw DataError("checkpoint parameter '" + e.at("name").get<std::string>() + "' does not match the model");
    }
    const std::size_t offset = e.at("offset").get<std::size_t>();
    const std::size_t count = e.at("count").get<std::size_t>();
    if (data_start + (offset + count) * 4 > bytes.size()) throw DataError("checkpoint data truncated");
    auto dst = p->tensor.mutable_data();
    for (std::size_t k = 0; k < count; ++k) {
      const std::size_t at = data_start + (offset + k) * 4;
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[at + b])) << (8 * b);
      dst[k] = std::bit_cast<float>(bits);
    }
  }
  return model;
}

void save_checkpoint(const TrainedModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  const std::string bytes = serialize_checkpoint(model);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing checkpoint '" + path + "'");
}

TrainedModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_checkpoint(buf.str());
}

}  // namespace rffi
