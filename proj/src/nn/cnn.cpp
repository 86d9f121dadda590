#include "pfoa/nn/cnn.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "pfoa/error.hpp"
#include "pfoa/rng.hpp"

namespace pfoa::nn {

using nlohmann::json;

namespace {

int pooled(int dim, std::size_t stages) {
  for (std::size_t i = 0; i < stages; ++i) dim = (dim + 1) / 2;
  return dim;
}

void he_uniform(std::span<double> w, int fan_in, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / fan_in);
  for (auto& v : w) v = (2.0 * uniform01(rng) - 1.0) * bound;
}

Dense make_dense(int in, int out, std::mt19937_64& rng) {
  Dense d{in, out, std::vector<double>(static_cast<std::size_t>(in) * out), std::vector<double>(out, 0.0)};
  he_uniform(d.weights, in, rng);
  return d;
}

}  // namespace

int Architecture::feature_h() const { return pooled(input_h, widths.size()); }
int Architecture::feature_w() const { return pooled(input_w, widths.size()); }
int Architecture::flat_features() const { return widths.empty() ? 0 : widths.back() * feature_h() * feature_w(); }

void validate(const Architecture& a) {
  if (a.input_h < 1 || a.input_w < 1 || a.input_c < 1) throw ValidationError("architecture: bad input shape");
  if (a.widths.empty()) throw ValidationError("architecture: at least one conv block required");
  for (int w : a.widths) {
    if (w < 1) throw ValidationError("architecture: channel width must be >= 1");
  }
  if (a.kernel < 1 || a.kernel % 2 == 0) throw ValidationError("architecture: kernel must be odd and >= 1");
  if (a.fc_hidden < 1 || a.classes < 2) throw ValidationError("architecture: bad dense sizes");
  if (!(a.dropout >= 0.0 && a.dropout < 1.0)) throw ValidationError("architecture: dropout must be in [0, 1)");
}

std::vector<std::span<double>> CnnModel::parameters() {
  std::vector<std::span<double>> p;
  for (auto& b : blocks) {
    p.emplace_back(b.weights.data);
    p.emplace_back(b.bias);
    p.emplace_back(b.bn.gamma);
    p.emplace_back(b.bn.beta);
  }
  p.emplace_back(fc1.weights);
  p.emplace_back(fc1.bias);
  p.emplace_back(fc2.weights);
  p.emplace_back(fc2.bias);
  return p;
}

std::vector<std::span<const double>> CnnModel::parameters() const {
  std::vector<std::span<const double>> out;
  for (auto s : const_cast<CnnModel*>(this)->parameters()) out.emplace_back(s);
  return out;
}

std::size_t CnnModel::parameter_count() const {
  std::size_t n = 0;
  for (auto s : parameters()) n += s.size();
  return n;
}

CnnModel init_model(const Architecture& arch, std::uint64_t seed) {
  validate(arch);
  auto rng = make_stream(seed, 0x11);
  CnnModel m;
  m.arch = arch;
  int in_c = arch.input_c;
  for (int width : arch.widths) {
    ConvBlock b;
    b.weights = Tensor(width, in_c, arch.kernel, arch.kernel);
    he_uniform(b.weights.data, in_c * arch.kernel * arch.kernel, rng);
    b.bias.assign(width, 0.0);
    b.bn.gamma.assign(width, 1.0);
    b.bn.beta.assign(width, 0.0);
    b.bn.running_mean.assign(width, 0.0);
    b.bn.running_var.assign(width, 1.0);
    m.blocks.push_back(std::move(b));
    in_c = width;
  }
  m.fc1 = make_dense(arch.flat_features(), arch.fc_hidden, rng);
  m.fc2 = make_dense(arch.fc_hidden, arch.classes, rng);
  return m;
}

void validate(const CnnModel& m) {
  validate(m.arch);
  if (m.blocks.size() != m.arch.widths.size()) throw ValidationError("model: block count differs from descriptor");
  int in_c = m.arch.input_c;
  for (std::size_t i = 0; i < m.blocks.size(); ++i) {
    const auto& b = m.blocks[i];
    const int width = m.arch.widths[i];
    const auto w = static_cast<std::size_t>(width);
    if (b.weights.n != width || b.weights.c != in_c || b.weights.h != m.arch.kernel || b.weights.w != m.arch.kernel ||
        b.weights.data.size() != b.weights.size() || b.bias.size() != w || b.bn.gamma.size() != w ||
        b.bn.beta.size() != w || b.bn.running_mean.size() != w || b.bn.running_var.size() != w) {
      throw ValidationError("model: conv block " + std::to_string(i) + " shape mismatch");
    }
    for (double v : b.bn.running_var) {
      if (!(v >= 0.0)) throw ValidationError("model: negative running variance");
    }
    in_c = width;
  }
  const auto check_dense = [](const Dense& d, int in, int out, const char* name) {
    if (d.in != in || d.out != out || d.weights.size() != static_cast<std::size_t>(in) * out ||
        d.bias.size() != static_cast<std::size_t>(out)) {
      throw ValidationError(std::string("model: ") + name + " shape mismatch");
    }
  };
  check_dense(m.fc1, m.arch.flat_features(), m.arch.fc_hidden, "fc1");
  check_dense(m.fc2, m.arch.fc_hidden, m.arch.classes, "fc2");
}

ParamGrads zero_grads(const CnnModel& model) {
  ParamGrads g;
  for (auto s : model.parameters()) g.emplace_back(s.size(), 0.0);
  return g;
}

Tensor forward(CnnModel& model, const Tensor& batch, Mode mode, std::mt19937_64& rng, ForwardTape* tape) {
  const auto& a = model.arch;
  if (batch.c != a.input_c || batch.h != a.input_h || batch.w != a.input_w || batch.n < 1) {
    throw ShapeError("forward: expected batch of " + std::to_string(a.input_c) + "x" + std::to_string(a.input_h) +
                     "x" + std::to_string(a.input_w) + " images");
  }
  ForwardTape local;
  ForwardTape& t = tape ? *tape : local;
  t = ForwardTape{};
  t.mode = mode;
  const int pad = a.kernel / 2;
  Tensor x = batch;
  for (auto& block : model.blocks) {
    t.block_inputs.push_back(x);
    Tensor conv = conv2d_forward(x, block.weights, block.bias, 1, pad);
    t.bn.emplace_back();
    Tensor bn = batchnorm_forward(conv, block.bn, mode, t.bn.back());
    t.pool.emplace_back();
    Tensor pooled_map = maxpool2x2_forward(bn, t.pool.back());
    t.bn_outputs.push_back(std::move(bn));
    x = relu_forward(pooled_map);
    t.block_outputs.push_back(x);
  }
  t.fc1_out = relu_forward(linear_forward(x, model.fc1.weights, model.fc1.bias, model.fc1.out));
  t.dropped = dropout_forward(t.fc1_out, a.dropout, mode, rng, t.dropout_mask);
  t.logits = linear_forward(t.dropped, model.fc2.weights, model.fc2.bias, model.fc2.out);
  t.probs = softmax(t.logits);
  return t.probs;
}

Tensor forward_eval(const CnnModel& model, const Tensor& batch) {
  std::mt19937_64 unused(0);
  // Eval mode reads running statistics and never writes model state.
  return forward(const_cast<CnnModel&>(model), batch, Mode::Eval, unused, nullptr);
}

ParamGrads backward(const CnnModel& model, const ForwardTape& t, const Tensor& grad_logits) {
  if (!grad_logits.same_shape(t.logits)) throw ShapeError("backward: gradient does not match logits");
  ParamGrads grads = zero_grads(model);
  const std::size_t nb = model.blocks.size();
  const std::size_t fc1_slot = 4 * nb;

  auto fc2 = linear_backward(t.dropped, model.fc2.weights, grad_logits);
  grads[fc1_slot + 2] = std::move(fc2.weights);
  grads[fc1_slot + 3] = std::move(fc2.bias);
  Tensor g = dropout_backward(fc2.input, t.dropout_mask);
  g = relu_backward(g, t.fc1_out);
  const Tensor& flat_in = t.block_outputs.back();
  auto fc1 = linear_backward(flat_in, model.fc1.weights, g);
  grads[fc1_slot] = std::move(fc1.weights);
  grads[fc1_slot + 1] = std::move(fc1.bias);
  g = std::move(fc1.input);

  const int pad = model.arch.kernel / 2;
  for (std::size_t i = nb; i-- > 0;) {
    const auto& block = model.blocks[i];
    g = relu_backward(g, t.block_outputs[i]);
    g = maxpool2x2_backward(g, t.pool[i]);
    auto bn = batchnorm_backward(g, block.bn, t.bn[i]);
    grads[4 * i + 2] = std::move(bn.gamma);
    grads[4 * i + 3] = std::move(bn.beta);
    auto conv = conv2d_backward(t.block_inputs[i], block.weights, bn.input, 1, pad, i > 0);
    grads[4 * i] = std::move(conv.weights.data);
    grads[4 * i + 1] = std::move(conv.bias);
    g = std::move(conv.input);
  }
  return grads;
}

Tensor softmax_cross_entropy_grad(const Tensor& probs, std::span<const int> labels) {
  if (labels.size() != static_cast<std::size_t>(probs.n)) throw ShapeError("label count mismatch");
  Tensor g = probs;
  for (int n = 0; n < probs.n; ++n) {
    g.data[static_cast<std::size_t>(n) * probs.c + labels[n]] -= 1.0;
  }
  for (auto& v : g.data) v /= probs.n;
  return g;
}

std::vector<double> predict_proba(const CnnModel& model, const Tensor& batch) {
  if (!model.trained) throw ValidationError("predict_proba: model has not been trained");
  validate(model);
  const Tensor probs = forward_eval(model, batch);
  std::vector<double> out(static_cast<std::size_t>(probs.n));
  for (int n = 0; n < probs.n; ++n) out[n] = probs.data[static_cast<std::size_t>(n) * probs.c + 1];
  return out;
}

double predict_proba(const CnnModel& model, std::span<const double> image) {
  const auto& a = model.arch;
  Tensor batch(1, a.input_c, a.input_h, a.input_w);
  if (image.size() != batch.size()) throw ShapeError("predict_proba: image size does not match the model input");
  std::copy(image.begin(), image.end(), batch.data.begin());
  return predict_proba(model, batch).front();
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

json arch_to_json(const Architecture& a) {
  return {{"input_h", a.input_h}, {"input_w", a.input_w}, {"input_c", a.input_c}, {"widths", a.widths},
          {"kernel", a.kernel},   {"fc_hidden", a.fc_hidden}, {"classes", a.classes}, {"dropout", a.dropout}};
}

Architecture arch_from_json(const json& j) {
  Architecture a;
  a.input_h = j.at("input_h").get<int>();
  a.input_w = j.at("input_w").get<int>();
  a.input_c = j.at("input_c").get<int>();
  a.widths = j.at("widths").get<std::vector<int>>();
  a.kernel = j.at("kernel").get<int>();
  a.fc_hidden = j.at("fc_hidden").get<int>();
  a.classes = j.at("classes").get<int>();
  a.dropout = j.at("dropout").get<double>();
  return a;
}

json dense_to_json(const Dense& d) {
  return {{"in", d.in}, {"out", d.out}, {"weights", d.weights}, {"bias", d.bias}};
}

Dense dense_from_json(const json& j) {
  return Dense{j.at("in").get<int>(), j.at("out").get<int>(), j.at("weights").get<std::vector<double>>(),
               j.at("bias").get<std::vector<double>>()};
}

}  // namespace

std::string serialize_model(const CnnModel& m) {
  validate(m);
  json blocks = json::array();
  for (const auto& b : m.blocks) {
    blocks.push_back({{"shape", {b.weights.n, b.weights.c, b.weights.h, b.weights.w}},
                      {"weights", b.weights.data},
                      {"bias", b.bias},
                      {"gamma", b.bn.gamma},
                      {"beta", b.bn.beta},
                      {"running_mean", b.bn.running_mean},
                      {"running_var", b.bn.running_var}});
  }
  json j = {{"format", "pfoa-cnn"},       {"version", kModelFormatVersion}, {"trained", m.trained},
            {"architecture", arch_to_json(m.arch)}, {"blocks", blocks}, {"fc1", dense_to_json(m.fc1)},
            {"fc2", dense_to_json(m.fc2)}};
  return j.dump();
}

CnnModel deserialize_model(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("cnn model: ") + e.what());
  }
  if (j.value("format", "") != "pfoa-cnn") throw ParseError("cnn model: unknown container format");
  if (j.value("version", -1) != kModelFormatVersion) {
    throw ValidationError("cnn model: version " + std::to_string(j.value("version", -1)) + " not supported (expected " +
                          std::to_string(kModelFormatVersion) + ")");
  }
  try {
    CnnModel m;
    m.arch = arch_from_json(j.at("architecture"));
    m.trained = j.at("trained").get<bool>();
    for (const auto& jb : j.at("blocks")) {
      ConvBlock b;
      const auto shape = jb.at("shape").get<std::vector<int>>();
      if (shape.size() != 4) throw ParseError("cnn model: conv shape must have 4 entries");
      b.weights = Tensor(shape[0], shape[1], shape[2], shape[3]);
      b.weights.data = jb.at("weights").get<std::vector<double>>();
      b.bias = jb.at("bias").get<std::vector<double>>();
      b.bn.gamma = jb.at("gamma").get<std::vector<double>>();
      b.bn.beta = jb.at("beta").get<std::vector<double>>();
      b.bn.running_mean = jb.at("running_mean").get<std::vector<double>>();
      b.bn.running_var = jb.at("running_var").get<std::vector<double>>();
      m.blocks.push_back(std::move(b));
    }
    m.fc1 = dense_from_json(j.at("fc1"));
    m.fc2 = dense_from_json(j.at("fc2"));
    validate(m);
    return m;
  } catch (const json::exception& e) {
    throw ParseError(std::string("cnn model: ") + e.what());
  }
}

void save_model(const CnnModel& model, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << serialize_model(model);
}

CnnModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_model(ss.str());
}

}  // namespace pfoa::nn
