#include "dial/model.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace dial {

using json = nlohmann::json;

std::vector<double> Example::input() const {
  std::vector<double> v;
  v.reserve(x.size() + y.size());
  v.insert(v.end(), x.begin(), x.end());
  v.insert(v.end(), y.begin(), y.end());
  return v;
}

namespace {

Tensor glorot_uniform(std::size_t out, std::size_t in, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(in + out));
  Tensor w = Tensor::zeros({out, in});
  for (double& v : w.data) v = rng.uniform(-a, a);
  return w;
}

Tensor glorot_uniform_vec(std::size_t n, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(n + 1));
  Tensor w = Tensor::zeros({n});
  for (double& v : w.data) v = rng.uniform(-a, a);
  return w;
}

}  // namespace

ModelParams init_params(const ModelConfig& config, Rng& rng) {
  if (config.embed_layers.empty() || config.critic_layers.empty()) {
    throw std::invalid_argument("init_params: empty layer spec");
  }
  ModelParams p;
  p.config = config;
  std::size_t in = config.input_dim;
  for (const std::size_t out : config.embed_layers) {
    p.theta.layers.push_back(
        {glorot_uniform(out, in, rng), Tensor::zeros({out}),
         ad::Activation::Gelu});
    in = out;
  }
  p.phi.weight = glorot_uniform_vec(config.embed_dim(), rng);
  in = config.embed_dim();
  for (const std::size_t out : config.critic_layers) {
    p.psi.hidden.push_back(
        {glorot_uniform(out, in, rng), Tensor::zeros({out}),
         ad::Activation::Gelu});
    in = out;
  }
  p.psi.out_weight = glorot_uniform_vec(in, rng);
  p.psi.out_bias = Tensor::scalar(0.0);
  return p;
}

std::vector<double> embed(const EmbedderParams& theta,
                          std::span<const double> input) {
  if (input.size() != theta.input_dim()) {
    throw ShapeError("embed: input has " + std::to_string(input.size()) +
                     " features, embedder wants " +
                     std::to_string(theta.input_dim()));
  }
  std::vector<double> a(input.begin(), input.end());
  for (const auto& layer : theta.layers) {
    const Tensor& w = layer.weight;
    std::vector<double> h(w.rows());
    for (std::size_t i = 0; i < w.rows(); ++i) {
      double acc = layer.bias.at(i);
      for (std::size_t j = 0; j < w.cols(); ++j) acc += w.at(i, j) * a[j];
      h[i] = ad::activation_scalar(layer.act, acc);
    }
    a = std::move(h);
  }
  return a;
}

double reward_score(const ModelParams& params, const Example& ex) {
  const auto emb = embed(params.theta, ex.input());
  if (emb.size() != params.phi.weight.size()) {
    throw ShapeError("reward_score: embedding dim " +
                     std::to_string(emb.size()) + " vs head dim " +
                     std::to_string(params.phi.weight.size()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < emb.size(); ++i)
    acc += params.phi.weight.at(i) * emb[i];
  return acc;
}

double critic_score_embedding(const CriticParams& psi,
                              std::span<const double> embedding) {
  std::vector<double> a(embedding.begin(), embedding.end());
  for (const auto& layer : psi.hidden) {
    const Tensor& w = layer.weight;
    if (a.size() != w.cols()) {
      throw ShapeError("critic: layer input dim " + std::to_string(a.size()) +
                       " vs weight " + shape_str(w.shape));
    }
    std::vector<double> h(w.rows());
    for (std::size_t i = 0; i < w.rows(); ++i) {
      double acc = layer.bias.at(i);
      for (std::size_t j = 0; j < w.cols(); ++j) acc += w.at(i, j) * a[j];
      h[i] = ad::activation_scalar(layer.act, acc);
    }
    a = std::move(h);
  }
  if (a.size() != psi.out_weight.size()) {
    throw ShapeError("critic: head dim mismatch");
  }
  double acc = psi.out_bias.scalar_value();
  for (std::size_t i = 0; i < a.size(); ++i) acc += psi.out_weight.at(i) * a[i];
  return acc;
}

double critic_score(const ModelParams& params, const Example& ex) {
  const auto emb = embed(params.theta, ex.input());
  return critic_score_embedding(params.psi, emb);
}

BoundEmbedder bind_embedder(ad::Graph& g, const EmbedderParams& theta,
                            bool trainable) {
  BoundEmbedder out;
  for (const auto& layer : theta.layers) {
    out.layers.push_back({g.leaf(layer.weight, trainable),
                          g.leaf(layer.bias, trainable), layer.act});
  }
  return out;
}

ad::Value embed_graph(const BoundEmbedder& emb, ad::Value input) {
  ad::Value a = input;
  for (const auto& layer : emb.layers) {
    a = ad::apply_activation(layer.act,
                             ad::add(ad::matmul(layer.weight, a), layer.bias));
  }
  return a;
}

ad::MlpRef bind_critic(ad::Graph& g, const CriticParams& psi, bool trainable) {
  ad::MlpRef mlp;
  for (const auto& layer : psi.hidden) {
    mlp.hidden.push_back({g.leaf(layer.weight, trainable),
                          g.leaf(layer.bias, trainable), layer.act});
  }
  mlp.out_weight = g.leaf(psi.out_weight, trainable);
  mlp.out_bias = g.leaf(psi.out_bias, trainable);
  return mlp;
}

ad::Value bind_reward(ad::Graph& g, const RewardHeadParams& phi,
                      bool trainable) {
  return g.leaf(phi.weight, trainable);
}

double spectral_norm(const Tensor& w) {
  if (w.rank() != 2) {
    throw ShapeError("spectral_norm: needs a matrix, got " +
                     shape_str(w.shape));
  }
  const std::size_t r = w.rows(), c = w.cols();
  std::vector<double> v(c, 1.0 / std::sqrt(static_cast<double>(c)));
  std::vector<double> wv(r), wtwv(c);
  double sigma = 0.0;
  constexpr int kMaxIters = 200;
  constexpr double kTol = 1e-9;
  for (int iter = 0; iter < kMaxIters; ++iter) {
    for (std::size_t i = 0; i < r; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < c; ++j) acc += w.at(i, j) * v[j];
      wv[i] = acc;
    }
    double norm_wv = 0.0;
    for (const double x : wv) norm_wv += x * x;
    norm_wv = std::sqrt(norm_wv);
    if (norm_wv == 0.0) return 0.0;
    const double prev = sigma;
    sigma = norm_wv;
    if (std::abs(sigma - prev) <= kTol * std::max(1.0, sigma) && iter > 0) {
      return sigma;
    }
    for (std::size_t j = 0; j < c; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < r; ++i) acc += w.at(i, j) * wv[i];
      wtwv[j] = acc;
    }
    double norm_wtwv = 0.0;
    for (const double x : wtwv) norm_wtwv += x * x;
    norm_wtwv = std::sqrt(norm_wtwv);
    if (norm_wtwv == 0.0) return 0.0;
    for (std::size_t j = 0; j < c; ++j) v[j] = wtwv[j] / norm_wtwv;
  }
  throw std::runtime_error("spectral_norm: power iteration did not settle, residual=" +
                           std::to_string(std::abs(sigma)));
}

double gelu_prime_sup() {
  static const double cached = [] {
    double best = 0.0;
    const int n = static_cast<int>(12.0 / 1e-4);
    for (int i = 0; i <= n; ++i) {
      const double x = -6.0 + 1e-4 * i;
      best = std::max(best, std::abs(ad::gelu_prime_scalar(x)));
    }
    return best;
  }();
  return cached;
}

double activation_lipschitz(ad::Activation act) {
  switch (act) {
    case ad::Activation::Identity: return 1.0;
    case ad::Activation::Gelu: return gelu_prime_sup();
    case ad::Activation::Sigmoid: return 0.25;
  }
  throw std::logic_error("unknown activation");
}

double lipschitz_upper_bound(const EmbedderParams& theta,
                             const RewardHeadParams& phi) {
  double k = 0.0;
  for (std::size_t i = 0; i < phi.weight.size(); ++i) {
    k += phi.weight.at(i) * phi.weight.at(i);
  }
  k = std::sqrt(k);
  for (const auto& layer : theta.layers) {
    k *= spectral_norm(layer.weight) * activation_lipschitz(layer.act);
  }
  return k;
}

namespace {

void for_each_main_tensor(ModelParams& p,
                          const std::function<void(Tensor&)>& fn) {
  for (auto& layer : p.theta.layers) {
    fn(layer.weight);
    fn(layer.bias);
  }
  fn(p.phi.weight);
}

void for_each_critic_tensor(ModelParams& p,
                            const std::function<void(Tensor&)>& fn) {
  for (auto& layer : p.psi.hidden) {
    fn(layer.weight);
    fn(layer.bias);
  }
  fn(p.psi.out_weight);
  fn(p.psi.out_bias);
}

std::vector<double> flatten_group(
    ModelParams& p, void (*visit)(ModelParams&,
                                  const std::function<void(Tensor&)>&)) {
  std::vector<double> flat;
  visit(p, [&flat](Tensor& t) {
    flat.insert(flat.end(), t.data.begin(), t.data.end());
  });
  return flat;
}

void unflatten_group(ModelParams& p, std::span<const double> flat,
                     void (*visit)(ModelParams&,
                                   const std::function<void(Tensor&)>&)) {
  std::size_t pos = 0;
  visit(p, [&](Tensor& t) {
    if (pos + t.size() > flat.size()) {
      throw ShapeError("unflatten: flat vector too short");
    }
    for (std::size_t i = 0; i < t.size(); ++i) t.data[i] = flat[pos + i];
    pos += t.size();
  });
  if (pos != flat.size()) {
    throw ShapeError("unflatten: flat vector has trailing entries");
  }
}

}  // namespace

std::vector<double> flatten_main(const ModelParams& p) {
  return flatten_group(const_cast<ModelParams&>(p), for_each_main_tensor);
}

std::vector<double> flatten_critic(const ModelParams& p) {
  return flatten_group(const_cast<ModelParams&>(p), for_each_critic_tensor);
}

void unflatten_main(ModelParams& p, std::span<const double> flat) {
  unflatten_group(p, flat, for_each_main_tensor);
}

void unflatten_critic(ModelParams& p, std::span<const double> flat) {
  unflatten_group(p, flat, for_each_critic_tensor);
}

namespace {

json tensor_to_json(const Tensor& t) {
  if (t.rank() == 2) {
    json rows = json::array();
    for (std::size_t i = 0; i < t.rows(); ++i) {
      json row = json::array();
      for (std::size_t j = 0; j < t.cols(); ++j) row.push_back(t.at(i, j));
      rows.push_back(std::move(row));
    }
    return rows;
  }
  if (t.rank() == 1) {
    json v = json::array();
    for (const double x : t.data) v.push_back(x);
    return v;
  }
  return t.scalar_value();
}

Tensor matrix_from_json(const json& j) {
  const std::size_t r = j.size();
  const std::size_t c = r ? j[0].size() : 0;
  Tensor t = Tensor::zeros({r, c});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t k = 0; k < c; ++k) t.at(i, k) = j[i][k].get<double>();
  return t;
}

Tensor vector_from_json(const json& j) {
  std::vector<double> v;
  v.reserve(j.size());
  for (const auto& x : j) v.push_back(x.get<double>());
  return Tensor::vector(std::move(v));
}

std::string act_name(ad::Activation a) {
  switch (a) {
    case ad::Activation::Identity: return "identity";
    case ad::Activation::Gelu: return "gelu";
    case ad::Activation::Sigmoid: return "sigmoid";
  }
  return "gelu";
}

ad::Activation act_from_name(const std::string& s) {
  if (s == "identity") return ad::Activation::Identity;
  if (s == "gelu") return ad::Activation::Gelu;
  if (s == "sigmoid") return ad::Activation::Sigmoid;
  throw std::invalid_argument("unknown activation name: " + s);
}

json layer_to_json(const DenseLayer& l) {
  return json{{"w", tensor_to_json(l.weight)},
              {"b", tensor_to_json(l.bias)},
              {"act", act_name(l.act)}};
}

DenseLayer layer_from_json(const json& j) {
  return DenseLayer{matrix_from_json(j.at("w")), vector_from_json(j.at("b")),
                    act_from_name(j.at("act").get<std::string>())};
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  json j;
  j["format"] = "dial-checkpoint-v1";
  j["config"] = ck.config_json.empty() ? json::object()
                                       : json::parse(ck.config_json);
  j["model"] = {{"input_dim", ck.params.config.input_dim},
                {"embed_layers", ck.params.config.embed_layers},
                {"critic_layers", ck.params.config.critic_layers}};
  json theta = json::array();
  for (const auto& l : ck.params.theta.layers) theta.push_back(layer_to_json(l));
  j["theta"] = std::move(theta);
  j["phi"] = tensor_to_json(ck.params.phi.weight);
  json psi;
  json hidden = json::array();
  for (const auto& l : ck.params.psi.hidden) hidden.push_back(layer_to_json(l));
  psi["hidden"] = std::move(hidden);
  psi["out_w"] = tensor_to_json(ck.params.psi.out_weight);
  psi["out_b"] = ck.params.psi.out_bias.scalar_value();
  j["psi"] = std::move(psi);
  json rng = json::array();
  for (const auto s : ck.rng_state) rng.push_back(std::to_string(s));
  j["rng_state"] = std::move(rng);
  j["step"] = ck.step;

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_checkpoint: cannot open " + path);
  f << j.dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_checkpoint: cannot open " + path);
  json j = json::parse(f);
  Checkpoint ck;
  ck.config_json = j.at("config").dump();
  ck.params.config.input_dim = j.at("model").at("input_dim").get<std::size_t>();
  ck.params.config.embed_layers =
      j.at("model").at("embed_layers").get<std::vector<std::size_t>>();
  ck.params.config.critic_layers =
      j.at("model").at("critic_layers").get<std::vector<std::size_t>>();
  for (const auto& l : j.at("theta")) {
    ck.params.theta.layers.push_back(layer_from_json(l));
  }
  ck.params.phi.weight = vector_from_json(j.at("phi"));
  for (const auto& l : j.at("psi").at("hidden")) {
    ck.params.psi.hidden.push_back(layer_from_json(l));
  }
  ck.params.psi.out_weight = vector_from_json(j.at("psi").at("out_w"));
  ck.params.psi.out_bias = Tensor::scalar(j.at("psi").at("out_b").get<double>());
  const auto& rng = j.at("rng_state");
  for (std::size_t i = 0; i < 4; ++i) {
    ck.rng_state[i] = std::stoull(rng.at(i).get<std::string>());
  }
  ck.step = j.at("step").get<std::uint64_t>();
  return ck;
}

}  // namespace dial
