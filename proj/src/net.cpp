#include "semtrack/net.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <json.hpp>

#include "semtrack/error.hpp"

namespace semtrack {

using nn::LayerSpec;

ModelConfig ModelConfig::paper_scale() {
  ModelConfig c;
  c.categories = {"pedestrian", "face", "car", "animal", "ball", "motorbike", "doll"};
  c.input_side = 107;
  c.conv_channels = {64, 256, 256};
  c.hidden_c = 256;
  c.hidden_t = 256;
  return c;
}

const CategoryLabel& ModelBundle::label(std::string_view name) const {
  for (const CategoryLabel& l : labels) {
    if (l.name == name) return l;
  }
  throw Error("unknown category '" + std::string(name) + "'");
}

namespace {

nn::Sequential make_trunk(const ModelConfig& c) {
  std::vector<LayerSpec> specs{
      LayerSpec::conv("conv1", c.conv_channels[0], 11, 4, 0), LayerSpec::relu(),
      LayerSpec::lrn_layer(c.lrn), LayerSpec::maxpool(2, 2),
      LayerSpec::conv("conv2", c.conv_channels[1], 5, 1, 2), LayerSpec::relu(),
      LayerSpec::lrn_layer(c.lrn), LayerSpec::maxpool(2, 2),
      LayerSpec::conv("conv3", c.conv_channels[2], 3, 1, 1), LayerSpec::relu(),
  };
  return nn::Sequential(std::move(specs), {3, c.input_side, c.input_side});
}

nn::Sequential make_head(const std::string& suffix, std::size_t in, std::size_t hidden,
                         std::size_t out, double dropout) {
  std::vector<LayerSpec> specs{LayerSpec::linear("fc4_" + suffix, hidden), LayerSpec::relu(),
                               LayerSpec::dropout(dropout), LayerSpec::linear("fc5_" + suffix, out)};
  return nn::Sequential(std::move(specs), {in});
}

ModelBundle assemble(const ModelConfig& config) {
  if (config.categories.empty()) {
    throw Error("build_model: need at least one named category besides " + config.category_x_name);
  }
  if (config.hidden_c == 0 || config.hidden_t == 0) {
    throw Error("build_model: hidden widths must be positive");
  }
  for (std::size_t ch : config.conv_channels) {
    if (ch == 0) throw Error("build_model: convolution widths must be positive");
  }
  ModelBundle m;
  m.config = config;
  for (std::size_t i = 0; i < config.categories.size(); ++i) {
    const std::string& name = config.categories[i];
    if (name.empty() || name == config.category_x_name ||
        std::count(config.categories.begin(), config.categories.end(), name) != 1) {
      throw Error("build_model: category names must be unique, non-empty and differ from '" +
                  config.category_x_name + "'");
    }
    m.labels.push_back({static_cast<int>(i), name, false});
  }
  m.labels.push_back({static_cast<int>(config.categories.size()), config.category_x_name, true});

  m.net_s = make_trunk(config);
  const std::size_t d = m.net_s.output_width();
  m.net_c = make_head("c", d, config.hidden_c, m.labels.size(), config.dropout_rate);
  for (std::size_t i = 0; i < m.labels.size(); ++i) {
    m.net_t.push_back(make_head("t", d, config.hidden_t, 2, config.dropout_rate));
  }
  return m;
}

}  // namespace

ModelBundle build_model(const ModelConfig& config) {
  ModelBundle m = assemble(config);
  Rng rng = make_rng(config.seed, "model-init");
  m.net_s.initialize(rng, config.linear_init_stddev);
  m.net_c.initialize(rng, config.linear_init_stddev);
  for (nn::Sequential& branch : m.net_t) branch.initialize(rng, config.linear_init_stddev);
  return m;
}

void standardize_samples(Tensor& batch) {
  if (batch.rank() < 2) throw ShapeError("standardize_samples: expected a batch");
  const std::size_t n = batch.dim(0);
  const std::size_t per = batch.size() / n;
  for (std::size_t i = 0; i < n; ++i) {
    double* x = batch.data() + i * per;
    double mean = 0.0;
    for (std::size_t j = 0; j < per; ++j) mean += x[j];
    mean /= static_cast<double>(per);
    double var = 0.0;
    for (std::size_t j = 0; j < per; ++j) var += (x[j] - mean) * (x[j] - mean);
    const double scale = 1.0 / std::max(std::sqrt(var / static_cast<double>(per)), 1e-2);
    for (std::size_t j = 0; j < per; ++j) x[j] = (x[j] - mean) * scale;
  }
}

Tensor forward_shared(const ModelBundle& model, const Tensor& batch) {
  const std::size_t s = model.config.input_side;
  if (batch.rank() != 4 || batch.dim(1) != 3 || batch.dim(2) != s || batch.dim(3) != s) {
    throw ShapeError("forward_shared expects N x 3 x " + std::to_string(s) + " x " +
                     std::to_string(s) + " input, got " + to_string(batch.shape()));
  }
  Tensor input = batch;
  standardize_samples(input);
  Tensor out = model.net_s.forward(input);
  const std::size_t n = batch.dim(0);
  return std::move(out).reshaped({n, out.size() / n});
}

namespace {
void check_features(const ModelBundle& model, const Tensor& features) {
  if (features.rank() != 2 || features.dim(1) != model.feature_width()) {
    throw ShapeError("expected N x " + std::to_string(model.feature_width()) +
                     " features, got " + to_string(features.shape()));
  }
}
}  // namespace

Tensor classify_logits(const ModelBundle& model, const Tensor& features) {
  check_features(model, features);
  return model.net_c.forward(features);
}

Tensor forward_classify(const ModelBundle& model, const Tensor& features) {
  return nn::softmax(classify_logits(model, features));
}

std::vector<double> forward_track(const ModelBundle& model, const CategoryLabel& branch,
                                  const Tensor& features) {
  if (branch.index < 0 || static_cast<std::size_t>(branch.index) >= model.net_t.size() ||
      model.labels[static_cast<std::size_t>(branch.index)].name != branch.name) {
    throw Error("forward_track: unknown branch '" + branch.name + "'");
  }
  check_features(model, features);
  const Tensor probs = nn::softmax(model.net_t[static_cast<std::size_t>(branch.index)].forward(features));
  std::vector<double> fg(features.dim(0));
  for (std::size_t i = 0; i < fg.size(); ++i) fg[i] = probs[i * 2 + kForeground];
  return fg;
}

// ---- persistence -------------------------------------------------------------

namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'S', 'E', 'M', 'T', 'R', 'K', 'M', '1'};
constexpr int kFormatVersion = 1;

struct Entry {
  std::string name;
  const Tensor* tensor;
};

void collect(const std::string& prefix, const nn::Sequential& net, std::vector<Entry>& out) {
  for (const nn::Layer& l : net.layers()) {
    if (!l.has_params()) continue;
    out.push_back({prefix + "." + l.spec.name + ".weight", &l.params.weights});
    out.push_back({prefix + "." + l.spec.name + ".bias", &l.params.bias});
  }
}

json config_to_json(const ModelConfig& c) {
  return json{{"categories", c.categories},
              {"category_x", c.category_x_name},
              {"input_side", c.input_side},
              {"conv_channels", c.conv_channels},
              {"hidden_c", c.hidden_c},
              {"hidden_t", c.hidden_t},
              {"dropout_rate", c.dropout_rate},
              {"lrn", {{"size", c.lrn.size}, {"k", c.lrn.k}, {"alpha", c.lrn.alpha}, {"beta", c.lrn.beta}}},
              {"linear_init_stddev", c.linear_init_stddev},
              {"seed", c.seed}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.categories = j.at("categories").get<std::vector<std::string>>();
  c.category_x_name = j.at("category_x").get<std::string>();
  c.input_side = j.at("input_side").get<std::size_t>();
  c.conv_channels = j.at("conv_channels").get<std::array<std::size_t, 3>>();
  c.hidden_c = j.at("hidden_c").get<std::size_t>();
  c.hidden_t = j.at("hidden_t").get<std::size_t>();
  c.dropout_rate = j.at("dropout_rate").get<double>();
  const json& l = j.at("lrn");
  c.lrn = {l.at("size").get<std::size_t>(), l.at("k").get<double>(), l.at("alpha").get<double>(),
           l.at("beta").get<double>()};
  c.linear_init_stddev = j.at("linear_init_stddev").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

void put_f64(std::string& out, double d) { put_u64(out, std::bit_cast<std::uint64_t>(d)); }

}  // namespace

void save_model(const ModelBundle& model, const std::filesystem::path& path) {
  std::vector<Entry> entries;
  collect("net_s", model.net_s, entries);
  collect("net_c", model.net_c, entries);
  for (std::size_t i = 0; i < model.net_t.size(); ++i) {
    collect("net_t." + model.labels[i].name, model.net_t[i], entries);
  }
  Tensor reg_bias;
  if (model.regressors) {
    entries.push_back({"regressor.weights", &model.regressors->weights});
    reg_bias = Tensor({4}, std::vector<double>(model.regressors->bias.begin(), model.regressors->bias.end()));
    entries.push_back({"regressor.bias", &reg_bias});
  }

  json header;
  header["format"] = "semtrack-model";
  header["version"] = kFormatVersion;
  header["dtype"] = "float64-le";
  header["config"] = config_to_json(model.config);
  header["regressor_ridge"] = model.regressors ? json(model.regressors->ridge) : json(nullptr);
  json list = json::array();
  std::uint64_t offset = 0;
  for (const Entry& e : entries) {
    list.push_back({{"name", e.name}, {"shape", e.tensor->shape()}, {"offset", offset}});
    offset += e.tensor->size() * 8;
  }
  header["entries"] = list;
  header["payload_bytes"] = offset;

  const std::string head = header.dump();
  std::string bytes(kMagic, sizeof(kMagic));
  put_u64(bytes, head.size());
  bytes += head;
  bytes.reserve(bytes.size() + offset);
  for (const Entry& e : entries) {
    for (double v : e.tensor->values()) put_f64(bytes, v);
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("save_model: cannot open " + path.string() + " for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error("save_model: write failed for " + path.string());
}

ModelBundle load_model(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("load_model: cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::string where = "load_model(" + path.string() + "): ";
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 8) != 0) {
    throw FormatError(where + "not a model container (bad magic)");
  }
  const std::uint64_t head_len = get_u64(raw + 8);
  if (head_len > bytes.size() - 16) throw FormatError(where + "truncated header");
  json header;
  try {
    header = json::parse(bytes.substr(16, head_len));
  } catch (const json::exception& e) {
    throw FormatError(where + "unparsable header: " + e.what());
  }
  ModelBundle m;
  std::uint64_t payload_bytes = 0;
  std::vector<std::pair<std::string, Shape>> listed;
  try {
    if (header.at("format") != "semtrack-model") throw FormatError(where + "unexpected format tag");
    if (header.at("version").get<int>() != kFormatVersion) {
      throw FormatError(where + "unsupported version " + header.at("version").dump());
    }
    if (header.at("dtype") != "float64-le") throw FormatError(where + "unsupported dtype");
    m = assemble(config_from_json(header.at("config")));
    if (!header.at("regressor_ridge").is_null()) {
      m.regressors = RegressorSet{};
      m.regressors->ridge = header.at("regressor_ridge").get<double>();
      m.regressors->weights = Tensor({4, m.feature_width()});
    }
    for (const json& e : header.at("entries")) {
      listed.emplace_back(e.at("name").get<std::string>(), e.at("shape").get<Shape>());
    }
    payload_bytes = header.at("payload_bytes").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw FormatError(where + "malformed header: " + e.what());
  } catch (const FormatError&) {
    throw;
  } catch (const Error& e) {
    throw FormatError(where + "invalid configuration: " + e.what());
  }

  std::vector<std::pair<std::string, Tensor*>> expected;
  auto gather = [&expected](const std::string& prefix, nn::Sequential& net) {
    for (nn::Layer& l : net.layers()) {
      if (!l.has_params()) continue;
      expected.emplace_back(prefix + "." + l.spec.name + ".weight", &l.params.weights);
      expected.emplace_back(prefix + "." + l.spec.name + ".bias", &l.params.bias);
    }
  };
  gather("net_s", m.net_s);
  gather("net_c", m.net_c);
  for (std::size_t i = 0; i < m.net_t.size(); ++i) gather("net_t." + m.labels[i].name, m.net_t[i]);
  Tensor reg_bias({4});
  if (m.regressors) {
    expected.emplace_back("regressor.weights", &m.regressors->weights);
    expected.emplace_back("regressor.bias", &reg_bias);
  }
  if (listed.size() != expected.size()) {
    throw FormatError(where + "header lists " + std::to_string(listed.size()) +
                      " parameter entries, configuration implies " + std::to_string(expected.size()));
  }
  const std::size_t payload_start = 16 + head_len;
  if (bytes.size() - payload_start != payload_bytes) {
    throw FormatError(where + "payload is " + std::to_string(bytes.size() - payload_start) +
                      " bytes, header declares " + std::to_string(payload_bytes) + " (truncated file?)");
  }
  std::size_t pos = payload_start;
  for (std::size_t i = 0; i < expected.size(); ++i) {
    auto& [name, tensor] = expected[i];
    if (listed[i].first != name || listed[i].second != tensor->shape()) {
      throw FormatError(where + "entry " + std::to_string(i) + " is " + listed[i].first + " " +
                        to_string(listed[i].second) + ", expected " + name + " " +
                        to_string(tensor->shape()));
    }
    for (double& v : tensor->values()) {
      v = std::bit_cast<double>(get_u64(raw + pos));
      pos += 8;
    }
  }
  if (m.regressors) std::copy_n(reg_bias.data(), 4, m.regressors->bias.begin());
  return m;
}

}  // namespace semtrack
