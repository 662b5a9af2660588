#include "snet/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "json.hpp"
#include "snet/blobfile.hpp"
#include "snet/ops.hpp"

namespace snet::model {

using nlohmann::json;

namespace {

constexpr std::string_view kCheckpointMagic = "SNETCKPT";

void check_heads(std::span<const int> heads, int units) {
  if (heads.empty()) throw ConfigError("at least one head must be requested");
  for (std::size_t i = 0; i < heads.size(); ++i) {
    if (heads[i] < 0 || heads[i] > units) {
      throw ConfigError("head " + std::to_string(heads[i]) + " out of range [0, " + std::to_string(units) + "]");
    }
    if (i > 0 && heads[i] <= heads[i - 1]) throw ConfigError("heads must be strictly increasing");
  }
}

}  // namespace

UnitKind parse_unit_kind(std::string_view text) {
  if (text == "classic") return UnitKind::kClassic;
  if (text == "advanced") return UnitKind::kAdvanced;
  throw ConfigError("unknown unit kind '" + std::string(text) + "' (expected classic or advanced)");
}

LossMode parse_loss_mode(std::string_view text) {
  if (text == "greedy") return LossMode::kGreedy;
  if (text == "columnar") return LossMode::kColumnar;
  throw ConfigError("unknown loss mode '" + std::string(text) + "' (expected greedy or columnar)");
}

std::string_view to_string(UnitKind kind) { return kind == UnitKind::kClassic ? "classic" : "advanced"; }
std::string_view to_string(LossMode mode) { return mode == LossMode::kGreedy ? "greedy" : "columnar"; }

void SNetConfig::validate() const {
  if (channels < 1) throw ConfigError("channels must be >= 1");
  if (units < 1) throw ConfigError("units must be >= 1");
  if (image_channels < 1) throw ConfigError("image_channels must be >= 1");
  if (encoder_kernels.empty()) throw ConfigError("encoder needs at least one layer");
  for (int k : encoder_kernels) {
    if (k < 1 || k % 2 == 0) throw ConfigError("encoder kernel sizes must be odd and positive");
  }
  std::vector<int> mirrored(encoder_kernels.rbegin(), encoder_kernels.rend());
  if (decoder_kernels != mirrored) {
    throw ConfigError("decoder kernels must mirror the encoder kernels in reverse order");
  }
}

bool SNetConfig::same_architecture(const SNetConfig& other) const {
  return channels == other.channels && units == other.units && unit_kind == other.unit_kind &&
         encoder_kernels == other.encoder_kernels && decoder_kernels == other.decoder_kernels &&
         image_channels == other.image_channels;
}

std::vector<int> SNetConfig::loss_heads() const {
  if (loss_mode == LossMode::kColumnar) return {units};
  return all_heads();
}

std::vector<int> SNetConfig::all_heads() const {
  std::vector<int> heads;
  if (include_metric0) heads.push_back(0);
  for (int k = 1; k <= units; ++k) heads.push_back(k);
  return heads;
}

std::string config_to_json(const SNetConfig& c) {
  json j = {
      {"channels", c.channels},
      {"units", c.units},
      {"unit_kind", std::string(to_string(c.unit_kind))},
      {"encoder_kernels", c.encoder_kernels},
      {"decoder_kernels", c.decoder_kernels},
      {"image_channels", c.image_channels},
      {"loss_mode", std::string(to_string(c.loss_mode))},
      {"include_metric0", c.include_metric0},
  };
  return j.dump();
}

SNetConfig config_from_json(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("architecture record is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("architecture record must be a JSON object");
  static const std::set<std::string> known = {"channels",        "units",          "unit_kind",
                                              "encoder_kernels", "decoder_kernels", "image_channels",
                                              "loss_mode",       "include_metric0"};
  SNetConfig c;
  try {
    for (const auto& [key, value] : j.items()) {
      if (!known.contains(key)) throw ConfigError("unknown architecture key '" + key + "'");
      if (key == "channels") c.channels = value.get<int>();
      else if (key == "units") c.units = value.get<int>();
      else if (key == "unit_kind") c.unit_kind = parse_unit_kind(value.get<std::string>());
      else if (key == "encoder_kernels") c.encoder_kernels = value.get<std::vector<int>>();
      else if (key == "decoder_kernels") c.decoder_kernels = value.get<std::vector<int>>();
      else if (key == "image_channels") c.image_channels = value.get<int>();
      else if (key == "loss_mode") c.loss_mode = parse_loss_mode(value.get<std::string>());
      else if (key == "include_metric0") c.include_metric0 = value.get<bool>();
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("architecture record has a value of the wrong type: ") + e.what());
  }
  c.validate();
  return c;
}

// ----- model construction -----

template <typename T>
BasicSNetModel<T>::BasicSNetModel(SNetConfig cfg) : config(std::move(cfg)) {
  config.validate();
  const auto ch = static_cast<std::size_t>(config.channels);
  const auto img = static_cast<std::size_t>(config.image_channels);
  for (std::size_t i = 0; i < config.encoder_kernels.size(); ++i) {
    encoder.emplace_back(i == 0 ? img : ch, ch, static_cast<std::size_t>(config.encoder_kernels[i]));
  }
  const std::size_t convs_per_unit = config.unit_kind == UnitKind::kClassic ? 1 : 2;
  units.resize(static_cast<std::size_t>(config.units));
  for (auto& unit : units) {
    for (std::size_t j = 0; j < convs_per_unit; ++j) unit.convs.emplace_back(ch, ch, kUnitKernel);
  }
  const std::size_t dec_layers = config.decoder_kernels.size();
  for (std::size_t i = 0; i < dec_layers; ++i) {
    decoder.emplace_back(ch, i + 1 == dec_layers ? img : ch, static_cast<std::size_t>(config.decoder_kernels[i]));
  }
}

namespace {

// Calls visit(name, tensor) for every parameter in canonical order; works for
// const and non-const models alike.
template <typename Model, typename Visit>
void visit_parameters(Model& model, Visit&& visit) {
  const auto conv = [&visit](const std::string& prefix, auto& p) {
    visit(prefix + ".w", p.weight);
    visit(prefix + ".b", p.bias);
  };
  for (std::size_t i = 0; i < model.encoder.size(); ++i) conv("encoder." + std::to_string(i), model.encoder[i]);
  for (std::size_t i = 0; i < model.units.size(); ++i) {
    for (std::size_t j = 0; j < model.units[i].convs.size(); ++j) {
      conv("unit." + std::to_string(i) + ".conv." + std::to_string(j), model.units[i].convs[j]);
    }
  }
  for (std::size_t i = 0; i < model.decoder.size(); ++i) conv("decoder." + std::to_string(i), model.decoder[i]);
}

}  // namespace

template <typename T>
std::vector<NamedParam<T>> BasicSNetModel<T>::named_parameters() {
  std::vector<NamedParam<T>> out;
  visit_parameters(*this, [&out](std::string name, BasicTensor<T>& t) { out.push_back({std::move(name), &t}); });
  return out;
}

template <typename T>
std::vector<NamedConstParam<T>> BasicSNetModel<T>::named_parameters() const {
  std::vector<NamedConstParam<T>> out;
  visit_parameters(*this,
                   [&out](std::string name, const BasicTensor<T>& t) { out.push_back({std::move(name), &t}); });
  return out;
}

template <typename T>
std::vector<BasicTensor<T>*> BasicSNetModel<T>::parameters() {
  std::vector<BasicTensor<T>*> out;
  for (auto& np : named_parameters()) out.push_back(np.tensor);
  return out;
}

template <typename T>
std::size_t BasicSNetModel<T>::parameter_count() const {
  std::size_t total = 0;
  for (const auto& p : encoder) total += p.parameter_count();
  for (const auto& u : units) {
    for (const auto& p : u.convs) total += p.parameter_count();
  }
  for (const auto& p : decoder) total += p.parameter_count();
  return total;
}

template <typename T>
void BasicSNetModel<T>::zero_grad() {
  for (BasicTensor<T>* p : parameters()) {
    p->ensure_grad();
    p->zero_grad();
  }
}

template <typename T>
template <typename U>
BasicSNetModel<U> BasicSNetModel<T>::cast() const {
  BasicSNetModel<U> out(config);
  for (std::size_t i = 0; i < encoder.size(); ++i) out.encoder[i] = encoder[i].template cast<U>();
  for (std::size_t i = 0; i < units.size(); ++i) {
    for (std::size_t j = 0; j < units[i].convs.size(); ++j) {
      out.units[i].convs[j] = units[i].convs[j].template cast<U>();
    }
  }
  for (std::size_t i = 0; i < decoder.size(); ++i) out.decoder[i] = decoder[i].template cast<U>();
  return out;
}

template struct BasicSNetModel<float>;
template struct BasicSNetModel<double>;
template BasicSNetModel<double> BasicSNetModel<float>::cast<double>() const;
template BasicSNetModel<float> BasicSNetModel<double>::cast<float>() const;
template BasicSNetModel<float> BasicSNetModel<float>::cast<float>() const;
template BasicSNetModel<double> BasicSNetModel<double>::cast<double>() const;

SNetModel init_params(const SNetConfig& config, std::uint64_t seed) {
  SNetModel model(config);
  std::mt19937_64 rng(seed);
  for (auto& np : model.named_parameters()) {
    Tensor& t = *np.tensor;
    if (np.name.ends_with(".b")) continue;
    const Shape& s = t.shape();
    const double fan_in = static_cast<double>(s.c * s.h * s.w);
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
    for (float& v : t.data()) v = static_cast<float>(dist(rng));
  }
  return model;
}

SNetModel truncated(const SNetModel& model, int units) {
  if (units < 1 || units > model.config.units) {
    throw ConfigError("cannot truncate a " + std::to_string(model.config.units) + "-unit model to " +
                      std::to_string(units) + " units");
  }
  SNetConfig cfg = model.config;
  cfg.units = units;
  SNetModel out(cfg);
  out.encoder = model.encoder;
  out.units.assign(model.units.begin(), model.units.begin() + units);
  out.decoder = model.decoder;
  return out;
}

// ----- recorded forward -----

template <typename T>
VarId encode(BasicTape<T>& tape, BasicSNetModel<T>& model, VarId x) {
  VarId f = x;
  for (auto& layer : model.encoder) f = tape.relu(tape.conv2d_same(f, layer));
  return f;
}

template <typename T>
VarId unit_forward(BasicTape<T>& tape, BasicUnitParams<T>& unit, UnitKind kind, VarId f) {
  if (kind == UnitKind::kClassic) {
    return tape.add(f, tape.relu(tape.conv2d_same(f, unit.convs.at(0))));
  }
  const VarId hidden = tape.relu(tape.conv2d_same(f, unit.convs.at(0)));
  return tape.add(f, tape.conv2d_same(hidden, unit.convs.at(1)));
}

template <typename T>
VarId decode(BasicTape<T>& tape, BasicSNetModel<T>& model, VarId f) {
  VarId g = f;
  for (std::size_t i = 0; i < model.decoder.size(); ++i) {
    g = tape.conv2d_same(g, model.decoder[i]);
    if (i + 1 < model.decoder.size()) g = tape.relu(g);
  }
  return g;
}

template <typename T>
std::vector<HeadVar> forward_heads(BasicTape<T>& tape, BasicSNetModel<T>& model, VarId x,
                                   std::span<const int> heads) {
  check_heads(heads, model.config.units);
  std::vector<HeadVar> out;
  VarId f = encode(tape, model, x);
  std::size_t next = 0;
  for (int k = 0; k <= heads.back(); ++k) {
    if (k > 0) f = unit_forward(tape, model.units[static_cast<std::size_t>(k - 1)], model.config.unit_kind, f);
    if (heads[next] == k) {
      out.push_back({k, decode(tape, model, f)});
      ++next;
    }
  }
  return out;
}

template <typename T>
std::vector<HeadVar> forward_all(BasicTape<T>& tape, BasicSNetModel<T>& model, VarId x) {
  const std::vector<int> heads = model.config.all_heads();
  return forward_heads(tape, model, x, heads);
}

template <typename T>
VarId greedy_loss(BasicTape<T>& tape, std::span<const HeadVar> outputs, VarId target, LossMode mode) {
  if (outputs.empty()) throw ShapeError("loss needs at least one head output");
  if (mode == LossMode::kColumnar) return tape.mse(outputs.back().image, target);
  std::vector<VarId> terms;
  terms.reserve(outputs.size());
  for (const HeadVar& h : outputs) terms.push_back(tape.mse(h.image, target));
  return tape.mean(terms);
}

// ----- inference -----

template <typename T>
BasicTensor<T> encode(const BasicSNetModel<T>& model, const BasicTensor<T>& x) {
  BasicTensor<T> f = x;
  for (const auto& layer : model.encoder) f = ops::relu(ops::conv2d_same(f, layer.weight, layer.bias));
  return f;
}

template <typename T>
BasicTensor<T> unit_forward(const BasicUnitParams<T>& unit, UnitKind kind, const BasicTensor<T>& f) {
  const auto& c0 = unit.convs.at(0);
  if (kind == UnitKind::kClassic) return ops::add(f, ops::relu(ops::conv2d_same(f, c0.weight, c0.bias)));
  const auto& c1 = unit.convs.at(1);
  const BasicTensor<T> hidden = ops::relu(ops::conv2d_same(f, c0.weight, c0.bias));
  return ops::add(f, ops::conv2d_same(hidden, c1.weight, c1.bias));
}

template <typename T>
BasicTensor<T> decode(const BasicSNetModel<T>& model, const BasicTensor<T>& f) {
  BasicTensor<T> g = f;
  for (std::size_t i = 0; i < model.decoder.size(); ++i) {
    g = ops::conv2d_same(g, model.decoder[i].weight, model.decoder[i].bias);
    if (i + 1 < model.decoder.size()) g = ops::relu(g);
  }
  return g;
}

std::vector<HeadImage> infer_heads(const SNetModel& model, const Tensor& x, std::span<const int> heads) {
  check_heads(heads, model.config.units);
  std::vector<HeadImage> out;
  Tensor f = encode(model, x);
  std::size_t next = 0;
  for (int k = 0; k <= heads.back(); ++k) {
    if (k > 0) f = unit_forward(model.units[static_cast<std::size_t>(k - 1)], model.config.unit_kind, f);
    if (heads[next] == k) {
      out.push_back({k, decode(model, f)});
      ++next;
    }
  }
  return out;
}

Tensor infer_head(const SNetModel& model, const Tensor& x, int head) {
  const int heads[] = {head};
  return std::move(infer_heads(model, x, heads).front().image);
}

#define SNET_INSTANTIATE_MODEL(T)                                                                        \
  template VarId encode(BasicTape<T>&, BasicSNetModel<T>&, VarId);                                       \
  template VarId unit_forward(BasicTape<T>&, BasicUnitParams<T>&, UnitKind, VarId);                      \
  template VarId decode(BasicTape<T>&, BasicSNetModel<T>&, VarId);                                       \
  template std::vector<HeadVar> forward_heads(BasicTape<T>&, BasicSNetModel<T>&, VarId,                  \
                                              std::span<const int>);                                     \
  template std::vector<HeadVar> forward_all(BasicTape<T>&, BasicSNetModel<T>&, VarId);                   \
  template VarId greedy_loss(BasicTape<T>&, std::span<const HeadVar>, VarId, LossMode);                  \
  template BasicTensor<T> encode(const BasicSNetModel<T>&, const BasicTensor<T>&);                       \
  template BasicTensor<T> unit_forward(const BasicUnitParams<T>&, UnitKind, const BasicTensor<T>&);      \
  template BasicTensor<T> decode(const BasicSNetModel<T>&, const BasicTensor<T>&);

SNET_INSTANTIATE_MODEL(float)
SNET_INSTANTIATE_MODEL(double)

#undef SNET_INSTANTIATE_MODEL

// ----- parameter accounting -----

ParamCounts count_params(const SNetConfig& config) {
  config.validate();
  const std::int64_t ch = config.channels;
  const std::int64_t img = config.image_channels;
  const auto conv = [](std::int64_t in, std::int64_t out, std::int64_t k) { return out * in * k * k + out; };
  ParamCounts counts;
  for (std::size_t i = 0; i < config.encoder_kernels.size(); ++i) {
    counts.encoder += conv(i == 0 ? img : ch, ch, config.encoder_kernels[i]);
  }
  const std::size_t dec_layers = config.decoder_kernels.size();
  for (std::size_t i = 0; i < dec_layers; ++i) {
    counts.decoder += conv(ch, i + 1 == dec_layers ? img : ch, config.decoder_kernels[i]);
  }
  const std::int64_t k = static_cast<std::int64_t>(kUnitKernel);
  counts.per_unit = (config.unit_kind == UnitKind::kClassic ? 1 : 2) * conv(ch, ch, k);
  for (int u = 1; u <= config.units; ++u) {
    counts.cumulative.push_back(counts.encoder + counts.decoder + u * counts.per_unit);
  }
  counts.total = counts.cumulative.back();
  return counts;
}

double to_mega(std::int64_t count) { return static_cast<double>(count) / 1048576.0; }

// ----- checkpoints -----

void save_checkpoint(const std::filesystem::path& path, const SNetModel& model) {
  std::vector<io::BlobView> blobs;
  for (const auto& np : model.named_parameters()) blobs.push_back({np.name, np.tensor->data()});
  io::write_blob_file(path, kCheckpointMagic, kCheckpointVersion, config_to_json(model.config), blobs);
}

SNetModel load_checkpoint(const std::filesystem::path& path) {
  io::BlobFile file = io::read_blob_file(path, kCheckpointMagic, kCheckpointVersion);
  SNetConfig cfg;
  try {
    cfg = config_from_json(file.header);
  } catch (const ConfigError& e) {
    throw CheckpointCorruptError("checkpoint config record unreadable (" + std::string(e.what()) + "): " +
                                 path.string());
  }
  SNetModel model(cfg);
  auto params = model.named_parameters();
  if (file.blobs.size() != params.size()) {
    throw CheckpointCorruptError("checkpoint holds " + std::to_string(file.blobs.size()) + " blobs, config needs " +
                                 std::to_string(params.size()) + ": " + path.string());
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    io::Blob& blob = file.blobs[i];
    if (blob.name != params[i].name || blob.values.size() != params[i].tensor->numel()) {
      throw CheckpointCorruptError("unexpected blob '" + blob.name + "' (" + std::to_string(blob.values.size()) +
                                   " values) where '" + params[i].name + "' was expected: " + path.string());
    }
    std::copy(blob.values.begin(), blob.values.end(), params[i].tensor->data().begin());
  }
  return model;
}

SNetModel load_checkpoint(const std::filesystem::path& path, const SNetConfig& expected) {
  SNetModel model = load_checkpoint(path);
  if (!model.config.same_architecture(expected)) {
    throw CheckpointConfigMismatch("checkpoint architecture " + config_to_json(model.config) +
                                   " does not match expected " + config_to_json(expected));
  }
  // Training-time fields follow the caller's config.
  model.config.loss_mode = expected.loss_mode;
  model.config.include_metric0 = expected.include_metric0;
  return model;
}

}  // namespace snet::model
