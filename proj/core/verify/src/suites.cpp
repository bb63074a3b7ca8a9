#include "pkgcn/verify/suites.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>
#include <sstream>

#include "pkgcn/data.hpp"
#include "pkgcn/gradcheck.hpp"
#include "pkgcn/nn.hpp"
#include "pkgcn/optim.hpp"
#include "pkgcn/pkgcn.hpp"
#include "pkgcn/simgraph.hpp"
#include "pkgcn/verify/oracles.hpp"

namespace pkgcn::verify {
namespace {

using Clock = std::chrono::steady_clock;
using TensorD = Tensor<double>;

TensorD random_tensor(Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  TensorD t(std::move(shape));
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

std::vector<std::int32_t> random_labels(std::size_t n, std::size_t m, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::int32_t> dist(0, static_cast<std::int32_t>(m) - 1);
  std::vector<std::int32_t> out(n);
  for (auto& v : out) v = dist(rng);
  return out;
}

double weighted_sum(const TensorD& a, const TensorD& w) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * w[i];
  return s;
}

TensorD add(TensorD a, const TensorD& b) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  return a;
}

struct Tracker {
  double max_error = 0.0;
  std::string where;
  std::size_t probes = 0;

  void check(const std::function<double()>& loss, const std::vector<TensorD*>& params,
             const std::vector<TensorD>& grads, const std::string& label, std::uint64_t seed,
             std::size_t max_probes = 0) {
    for (std::size_t k = 0; k < params.size(); ++k) {
      FiniteDifferenceOptions opts;
      opts.max_probes = max_probes;
      opts.seed = seed * 977 + k;
      const auto report = finite_difference_check(loss, params[k]->data(), grads[k].data(), opts);
      probes += report.probes;
      if (report.max_rel_error >= max_error) {
        max_error = report.max_rel_error;
        where = label + " param " + std::to_string(k) + " seed " + std::to_string(seed);
      }
    }
  }
};

SuiteResult finish(std::string name, const Tracker& t, double tolerance, Clock::time_point start) {
  SuiteResult r;
  r.name = std::move(name);
  r.max_error = t.max_error;
  r.tolerance = tolerance;
  r.passed = t.max_error <= tolerance;
  r.seconds = std::chrono::duration<double>(Clock::now() - start).count();
  r.detail = std::to_string(t.probes) + " probes";
  if (!t.where.empty()) r.detail += "; worst at " + t.where;
  return r;
}

template <typename F>
SuiteResult guarded(const std::string& name, double tolerance, F&& body) {
  const auto start = Clock::now();
  try {
    return body();
  } catch (const std::exception& e) {
    SuiteResult r;
    r.name = name;
    r.tolerance = tolerance;
    r.max_error = INFINITY;
    r.seconds = std::chrono::duration<double>(Clock::now() - start).count();
    r.detail = std::string("exception: ") + e.what();
    return r;
  }
}

Model<double> small_model(std::uint64_t seed) {
  const std::vector<LayerSpec> layers{LayerSpec::conv(3, 3), LayerSpec::relu(),   LayerSpec::maxpool2(),
                                      LayerSpec::conv(4, 3), LayerSpec::flatten(), LayerSpec::dense(8),
                                      LayerSpec::relu(),     LayerSpec::dense(5)};
  return Model<double>::build(layers, {2, 10, 10}, seed);
}

std::pair<SimilarityGraph, NormalizedAdjacency> random_graph(std::size_t m, std::mt19937_64& rng) {
  ConfusionCounts counts(m);
  std::uniform_int_distribution<std::uint64_t> dist(0, 6);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) counts.add(i, j, i == j ? 10 + dist(rng) : dist(rng) / 2);
  }
  auto graph = build_similarity(counts);
  auto adj = normalize(graph);
  return {graph, adj};
}

TensorD to_tensor(const NormalizedAdjacency& a) { return TensorD({a.m, a.m}, a.values); }

Activation activation_for(std::uint64_t seed) {
  static constexpr Activation cycle[] = {Activation::tanh, Activation::relu, Activation::identity};
  return cycle[seed % 3];
}

SuiteResult pkgcn_gradients(const VerifyOptions& options, HeadVariant variant) {
  const std::string name = variant == HeadVariant::v1 ? "pkgcn.v1.gradients" : "pkgcn.v2.gradients";
  return guarded(name, options.gradient_tolerance, [&] {
    const auto start = Clock::now();
    Tracker t;
    for (auto seed : options.seeds) {
      std::mt19937_64 rng(seed);
      const std::size_t m = 5, n = 4, batch = 3;
      auto [graph, adj] = random_graph(m, rng);
      const TensorD a_hat = to_tensor(adj);

      // Graph head on its own: node assembly, convolution and scoring.
      TensorD d = random_tensor({batch, n}, rng);
      TensorD c = random_tensor({m, n}, rng);
      GcnParams<double> gcn{random_tensor({2 * n, 2 * n}, rng, 0.5), activation_for(seed)};
      MergeHeadParams<double> head{random_tensor({4 * n, 2 * (n - 1)}, rng, 0.4),
                                   random_tensor({2 * (n - 1)}, rng, 0.1)};
      const TensorD r = random_tensor({batch, m}, rng);
      auto head_loss = [&] {
        const auto x = assemble_node_features(d, c);
        const auto g = gcn_forward(a_hat, x, gcn);
        if (variant == HeadVariant::v1) return weighted_sum(score_v1(d, c, g.output), r);
        return weighted_sum(score_v2(x, g.output, head).scores, r);
      };
      const auto x = assemble_node_features(d, c);
      const auto g = gcn_forward(a_hat, x, gcn);
      std::vector<TensorD*> params{&d, &c, &gcn.weight};
      std::vector<TensorD> grads;
      if (variant == HeadVariant::v1) {
        const auto sg = score_v1_backward(d, c, g.output, r);
        const auto gg = gcn_backward(a_hat, gcn, g, sg.h);
        const auto ng = assemble_node_features_backward(gg.x);
        grads = {add(sg.d, ng.d), add(sg.class_emb, ng.class_emb), gg.weight};
      } else {
        const auto fwd = score_v2(x, g.output, head);
        const auto sg = score_v2_backward(x, g.output, head, fwd, r);
        const auto gg = gcn_backward(a_hat, gcn, g, sg.h);
        const auto ng = assemble_node_features_backward(add(sg.x, gg.x));
        grads = {ng.d, ng.class_emb, gg.weight, sg.weight, sg.bias};
        params.push_back(&head.weight);
        params.push_back(&head.bias);
      }
      t.check(head_loss, params, grads, "head", seed);

      // Whole network with cross-entropy on the graph-head logits.
      PkGcnOptions opts;
      opts.variant = variant;
      opts.activation = activation_for(seed + 1);
      opts.identity_noise = 0.3;
      opts.head_half_width = seed % 2 == 0 ? 0 : 3;
      opts.seed = seed;
      auto model = assemble_pkgcn(small_model(seed), graph, adj, opts);
      const TensorD images = random_tensor({batch, 2, 10, 10}, rng);
      const auto labels = random_labels(batch, m, rng);
      auto loss = [&] { return softmax_cross_entropy(pkgcn_forward(model, images).logits, labels).loss; };
      const auto fwd = pkgcn_forward(model, images);
      const auto ce = softmax_cross_entropy(fwd.logits, labels);
      t.check(loss, model.trainable(), pkgcn_backward(model, fwd, ce.grad_logits), "network", seed);
    }
    return finish(name, t, options.gradient_tolerance, start);
  });
}

}  // namespace

SuiteResult op_gradients(const VerifyOptions& options) {
  return guarded("ops.gradients", options.gradient_tolerance, [&] {
    const auto start = Clock::now();
    Tracker t;
    for (auto seed : options.seeds) {
      std::mt19937_64 rng(seed);
      {
        TensorD a = random_tensor({3, 4}, rng), b = random_tensor({4, 5}, rng);
        const TensorD r = random_tensor({3, 5}, rng);
        const auto g = matmul_backward(a, b, r);
        t.check([&] { return weighted_sum(matmul(a, b), r); }, {&a, &b}, {g.a, g.b}, "matmul", seed);
      }
      {
        TensorD x = random_tensor({4, 6}, rng), w = random_tensor({5, 6}, rng), bias = random_tensor({5}, rng);
        const TensorD r = random_tensor({4, 5}, rng);
        const auto g = dense_backward(x, w, r);
        t.check([&] { return weighted_sum(dense(x, w, bias), r); }, {&x, &w, &bias}, {g.input, g.weight, g.bias},
                "dense", seed);
      }
      {
        TensorD x = random_tensor({4, 7}, rng);
        const TensorD r = random_tensor({4, 7}, rng);
        t.check([&] { return weighted_sum(relu(x), r); }, {&x}, {relu_backward(x, r)}, "relu", seed);
      }
      {
        TensorD x = random_tensor({2, 3, 4, 6}, rng);
        const TensorD r = random_tensor({2, 3, 2, 3}, rng);
        const auto pooled = maxpool2(x);
        t.check([&] { return weighted_sum(maxpool2(x).output, r); }, {&x},
                {maxpool2_backward(r, pooled.argmax, x.shape())}, "maxpool2", seed);
      }
      {
        TensorD logits = random_tensor({5, 4}, rng, 2.0);
        const auto labels = random_labels(5, 4, rng);
        t.check([&] { return softmax_cross_entropy(logits, labels).loss; }, {&logits},
                {softmax_cross_entropy(logits, labels).grad_logits}, "cross_entropy", seed);
      }
    }
    return finish("ops.gradients", t, options.gradient_tolerance, start);
  });
}

SuiteResult conv_gradients(const VerifyOptions& options) {
  return guarded("conv2d.gradients", options.gradient_tolerance, [&] {
    const auto start = Clock::now();
    Tracker t;
    for (auto seed : options.seeds) {
      std::mt19937_64 rng(seed);
      TensorD x = random_tensor({2, 2, 7, 6}, rng), k = random_tensor({3, 2, 3, 2}, rng),
              bias = random_tensor({3}, rng);
      const TensorD r = random_tensor({2, 3, 5, 5}, rng);
      const auto g = options.conv_backward(x, k, r, true);
      t.check([&] { return weighted_sum(conv2d(x, k, bias), r); }, {&x, &k, &bias}, {g.input, g.kernels, g.bias},
              "conv2d", seed);
    }
    return finish("conv2d.gradients", t, options.gradient_tolerance, start);
  });
}

SuiteResult model_gradients(const VerifyOptions& options) {
  return guarded("cnn.gradients", options.gradient_tolerance, [&] {
    const auto start = Clock::now();
    Tracker t;
    for (auto seed : options.seeds) {
      std::mt19937_64 rng(seed);
      auto model = small_model(seed);
      const TensorD images = random_tensor({3, 2, 10, 10}, rng);
      const auto labels = random_labels(3, 5, rng);
      auto loss = [&] { return softmax_cross_entropy(forward(model, images).logits, labels).loss; };
      const auto fwd = forward(model, images);
      const auto grads = backward(model, fwd.cache, softmax_cross_entropy(fwd.logits, labels).grad_logits);
      std::vector<TensorD*> params;
      for (auto& p : model.params()) params.push_back(&p.value);
      t.check(loss, params, grads, "cnn", seed);
    }
    return finish("cnn.gradients", t, options.gradient_tolerance, start);
  });
}

SuiteResult pkgcn_v1_gradients(const VerifyOptions& options) { return pkgcn_gradients(options, HeadVariant::v1); }
SuiteResult pkgcn_v2_gradients(const VerifyOptions& options) { return pkgcn_gradients(options, HeadVariant::v2); }

SuiteResult vgg11_gradients(const VerifyOptions& options) {
  return guarded("vgg11.gradients", options.gradient_tolerance, [&] {
    const auto start = Clock::now();
    Tracker t;
    const auto seed = options.seeds.empty() ? 1 : options.seeds.front();
    std::mt19937_64 rng(seed);
    auto model = build_base_model<double>("vgg11", seed, options.vgg_width_divisor);
    const TensorD images = random_tensor({2, 3, 32, 32}, rng, 0.5);
    const auto labels = random_labels(2, model.num_classes(), rng);
    auto loss = [&] { return softmax_cross_entropy(forward(model, images).logits, labels).loss; };
    const auto fwd = forward(model, images);
    const auto grads = backward(model, fwd.cache, softmax_cross_entropy(fwd.logits, labels).grad_logits);
    std::vector<TensorD*> params;
    for (auto& p : model.params()) params.push_back(&p.value);
    t.check(loss, params, grads, "vgg11", seed, 40);
    return finish("vgg11.gradients", t, options.gradient_tolerance, start);
  });
}

SuiteResult conv_oracle(const VerifyOptions& options) {
  return guarded("oracle.conv2d", 1e-10, [&] {
    const auto start = Clock::now();
    Tracker t;
    for (auto seed : options.seeds) {
      std::mt19937_64 rng(seed);
      const std::size_t b = 2, c = 3, h = 9, w = 8, f = 4, kh = 3, kw = 2;
      const TensorD x = random_tensor({b, c, h, w}, rng), k = random_tensor({f, c, kh, kw}, rng),
                    bias = random_tensor({f}, rng);
      const auto fast = conv2d(x, k, bias);
      const auto slow = oracle::conv2d(x.values(), b, c, h, w, k.values(), f, kh, kw, bias.values());
      for (std::size_t i = 0; i < slow.size(); ++i) {
        const double e = std::abs(fast[i] - slow[i]);
        if (e >= t.max_error) {
          t.max_error = e;
          t.where = "seed " + std::to_string(seed);
        }
      }
      t.probes += slow.size();
    }
    return finish("oracle.conv2d", t, 1e-10, start);
  });
}

SuiteResult confusion_oracle(const VerifyOptions& options) {
  return guarded("oracle.confusion", 0.0, [&] {
    const auto start = Clock::now();
    Tracker t;
    const std::size_t m = 10, n = 10000;
    for (auto seed : options.seeds) {
      std::mt19937_64 rng(seed);
      const auto truth = random_labels(n, m, rng), pred = random_labels(n, m, rng);
      const auto fast = record_confusion(truth, pred, m);
      const auto slow = oracle::confusion(truth, pred, m);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
          const double e = std::abs(static_cast<double>(fast.at(i, j)) - static_cast<double>(slow[i * m + j]));
          if (e > t.max_error) t.max_error = e;
        }
      }
      t.probes += m * m;
    }
    auto r = finish("oracle.confusion", t, 0.0, start);
    r.detail = std::to_string(n) + " label pairs x " + std::to_string(options.seeds.size()) + " seeds";
    return r;
  });
}

SuiteResult kipf_oracle(const VerifyOptions& options) {
  return guarded("oracle.kipf", 1e-12, [&] {
    const auto start = Clock::now();
    Tracker t;
    for (auto seed : options.seeds) {
      std::mt19937_64 rng(seed);
      const std::size_t m = 10;
      auto [graph, adj] = random_graph(m, rng);
      const auto slow = oracle::kipf(graph.weights, m);
      for (std::size_t i = 0; i < slow.size(); ++i) t.max_error = std::max(t.max_error, std::abs(adj.values[i] - slow[i]));
      t.probes += slow.size();
    }
    return finish("oracle.kipf", t, 1e-12, start);
  });
}

SuiteResult adadelta_oracle(const VerifyOptions& options) {
  return guarded("oracle.adadelta", 1e-12, [&] {
    const auto start = Clock::now();
    Tracker t;
    for (auto seed : options.seeds) {
      std::mt19937_64 rng(seed);
      std::normal_distribution<double> dist(0.0, 1.0);
      std::vector<double> grads(100);
      for (auto& g : grads) g = dist(rng);
      const double x0 = dist(rng);
      const AdaDeltaOptions opts;
      const auto trace = oracle::adadelta_trace(x0, grads, opts.rho, opts.epsilon, opts.learning_rate);
      const Shape shape{1};
      AdaDelta<double> optimizer(std::span<const Shape>(&shape, 1), opts);
      TensorD x({1}, x0);
      TensorD* ptr = &x;
      for (std::size_t s = 0; s < grads.size(); ++s) {
        const TensorD g({1}, grads[s]);
        optimizer.step(std::span<TensorD* const>(&ptr, 1), std::span<const TensorD>(&g, 1));
        t.max_error = std::max(t.max_error, std::abs(x[0] - trace[s]));
      }
      t.probes += grads.size();
    }
    return finish("oracle.adadelta", t, 1e-12, start);
  });
}

SuiteResult degenerate_equivalence(const VerifyOptions& options) {
  return guarded("degenerate.equivalence", 1e-6, [&] {
    const auto start = Clock::now();
    Tracker t;
    const auto seed = options.seeds.empty() ? 1 : options.seeds.front();
    std::mt19937_64 rng(seed);
    TensorD images = options.images;
    if (images.empty()) {
      std::uniform_real_distribution<double> pixel(0.0, 1.0);
      images = TensorD({100, 1, 28, 28});
      for (auto& v : images.data()) v = pixel(rng);
    }
    auto base = build_base_model<double>("cnn1", seed);
    // Non-zero bias shows the graph head ignores it.
    for (auto& v : base.classifier_bias().data()) v = 0.5;
    const std::size_t m = base.num_classes(), n = base.embedding_dim(), batch = images.dim(0);

    const auto d = data_embedding(base, images);
    std::vector<double> c_t(n * m);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) c_t[j * m + i] = base.classifier_weight()[i * n + j];
    const auto plain = oracle::matmul(d.values(), c_t, batch, n, m);

    PkGcnOptions opts;
    opts.activation = Activation::identity;
    opts.identity_noise = 0.0;
    SimilarityGraph empty{m, std::vector<double>(m * m, 0.0)};
    auto model = assemble_pkgcn(base, empty, normalize(empty), opts);
    const auto logits = pkgcn_forward(model, images).logits;

    std::size_t agree = 0;
    for (std::size_t b = 0; b < batch; ++b) {
      std::size_t best_plain = 0, best_graph = 0;
      for (std::size_t j = 0; j < m; ++j) {
        t.max_error = std::max(t.max_error, std::abs(logits[b * m + j] - 2.0 * plain[b * m + j]));
        if (plain[b * m + j] > plain[b * m + best_plain]) best_plain = j;
        if (logits[b * m + j] > logits[b * m + best_graph]) best_graph = j;
      }
      agree += best_plain == best_graph;
    }
    t.probes = batch * m;
    auto r = finish("degenerate.equivalence", t, 1e-6, start);
    r.passed = r.passed && agree == batch;
    r.detail = std::to_string(batch) + (options.images.empty() ? " random" : " MNIST") + " images; argmax agreement " +
               std::to_string(agree) + "/" + std::to_string(batch);
    return r;
  });
}

std::vector<SuiteResult> run_all(const VerifyOptions& options, std::ostream* log) {
  using Fn = SuiteResult (*)(const VerifyOptions&);
  static constexpr Fn suites[] = {op_gradients,     conv_gradients, model_gradients, pkgcn_v1_gradients,
                                  pkgcn_v2_gradients, vgg11_gradients, conv_oracle,   confusion_oracle,
                                  kipf_oracle,      adadelta_oracle, degenerate_equivalence};
  std::vector<SuiteResult> out;
  for (auto fn : suites) {
    out.push_back(fn(options));
    if (log) *log << format_result(out.back()) << std::endl;
  }
  return out;
}

std::string format_result(const SuiteResult& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-4s %-24s max_err=%.3e tol=%.0e %6.2fs  ", r.passed ? "ok" : "FAIL", r.name.c_str(),
                r.max_error, r.tolerance, r.seconds);
  return buf + r.detail;
}

std::optional<Tensor<double>> load_mnist_sample(const std::string& dir, std::size_t count, std::uint64_t seed) {
  const std::filesystem::path root(dir);
  const auto images = root / "t10k-images-idx3-ubyte", labels = root / "t10k-labels-idx1-ubyte";
  if (!std::filesystem::exists(images) || !std::filesystem::exists(labels)) return std::nullopt;
  const auto data = load_mnist<double>(images, labels);
  std::vector<std::size_t> idx(data.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(std::min(count, idx.size()));
  return gather(data, idx).first;
}

}  // namespace pkgcn::verify
