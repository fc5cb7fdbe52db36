#include "megalap/gradcheck.hpp"

#include <cmath>
#include <functional>

#include "megalap/autodiff.hpp"
#include "megalap/ega.hpp"
#include "megalap/loss.hpp"
#include "megalap/network.hpp"
#include "megalap/params.hpp"

namespace megalap {

namespace {

constexpr double kStep = 1e-5;

double rel_err(double a, double n) {
  return std::fabs(a - n) / std::max({std::fabs(a), std::fabs(n), 1e-3});
}

Tensor random_tensor(std::vector<i64> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (i64 i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// keeps values away from the kinks of relu/abs and from pooling ties
Tensor random_tensor_nudged(std::vector<i64> shape, Rng& rng) {
  Tensor t = random_tensor(std::move(shape), rng);
  for (i64 i = 0; i < t.numel(); ++i) {
    if (std::fabs(t[i]) < 0.02) t[i] = t[i] >= 0 ? t[i] + 0.05 : t[i] - 0.05;
  }
  return t;
}

using GraphFn = std::function<Var(Tape&, const std::vector<Var>&)>;

// Scalarizes via a fixed random projection so every output element matters.
Var project_to_scalar(Tape& tape, const Var& out, const Tensor& weights) {
  return sum(mul(out, tape.constant(weights, "proj")));
}

double check_graph(const std::vector<Tensor>& inputs, const GraphFn& fn, Rng& rng) {
  Tape tape;
  std::vector<Var> leaves;
  for (const Tensor& t : inputs) leaves.push_back(tape.leaf(t, "x"));
  Var out = fn(tape, leaves);
  Tensor proj = random_tensor(out.shape(), rng);
  Var loss = out.value().numel() == 1 ? out : project_to_scalar(tape, out, proj);
  backward(loss);
  std::vector<Tensor> analytic;
  for (const Var& leaf : leaves) analytic.push_back(leaf.grad());

  auto eval = [&](const std::vector<Tensor>& xs) {
    Tape t2;
    std::vector<Var> ls;
    for (const Tensor& x : xs) ls.push_back(t2.constant(x, "x"));
    Var o = fn(t2, ls);
    return o.value().numel() == 1 ? o.value()[0] : megalap::sum(mul(o, t2.constant(proj, "proj")).value());
  };

  double worst = 0;
  std::vector<Tensor> perturbed = inputs;
  for (size_t k = 0; k < inputs.size(); ++k) {
    for (i64 i = 0; i < inputs[k].numel(); ++i) {
      const double orig = perturbed[k][i];
      perturbed[k][i] = orig + kStep;
      const double fp = eval(perturbed);
      perturbed[k][i] = orig - kStep;
      const double fm = eval(perturbed);
      perturbed[k][i] = orig;
      const double numeric = (fp - fm) / (2 * kStep);
      worst = std::max(worst, rel_err(analytic[k][i], numeric));
    }
  }
  return worst;
}

struct OpCase {
  std::string name;
  std::vector<Tensor> inputs;
  GraphFn fn;
};

std::vector<OpCase> op_cases(Rng& rng) {
  std::vector<OpCase> cases;
  auto add_case = [&](std::string name, std::vector<Tensor> inputs, GraphFn fn) {
    cases.push_back({std::move(name), std::move(inputs), std::move(fn)});
  };

  const std::vector<i64> s4{2, 2, 4, 4};

  add_case("conv2d/zero",
           {random_tensor({1, 2, 5, 5}, rng), random_tensor({3, 2, 3, 3}, rng), random_tensor({3}, rng)},
           [](Tape&, const std::vector<Var>& x) { return conv2d(x[0], x[1], x[2], 1, Padding::Zero); });
  add_case("conv2d/reflect",
           {random_tensor(s4, rng), random_tensor({3, 2, 3, 3}, rng), random_tensor({3}, rng)},
           [](Tape&, const std::vector<Var>& x) { return conv2d(x[0], x[1], x[2], 1, Padding::Reflect); });
  add_case("conv2d/valid",
           {random_tensor({2, 2, 5, 5}, rng), random_tensor({3, 2, 3, 3}, rng), random_tensor({3}, rng)},
           [](Tape&, const std::vector<Var>& x) { return conv2d(x[0], x[1], x[2], 1, Padding::Valid); });
  add_case("conv2d/stride2",
           {random_tensor({1, 2, 6, 6}, rng), random_tensor({2, 2, 3, 3}, rng), random_tensor({2}, rng)},
           [](Tape&, const std::vector<Var>& x) { return conv2d(x[0], x[1], x[2], 2, Padding::Zero); });

  add_case("sigmoid", {random_tensor(s4, rng, -3, 3)},
           [](Tape&, const std::vector<Var>& x) { return sigmoid(x[0]); });
  add_case("relu", {random_tensor_nudged(s4, rng)}, [](Tape&, const std::vector<Var>& x) { return relu(x[0]); });
  add_case("abs", {random_tensor_nudged(s4, rng)}, [](Tape&, const std::vector<Var>& x) { return vabs(x[0]); });
  add_case("affine", {random_tensor(s4, rng)},
           [](Tape&, const std::vector<Var>& x) { return affine(x[0], -1.0, 1.0); });

  add_case("add", {random_tensor(s4, rng), random_tensor(s4, rng)},
           [](Tape&, const std::vector<Var>& x) { return add(x[0], x[1]); });
  add_case("sub", {random_tensor(s4, rng), random_tensor(s4, rng)},
           [](Tape&, const std::vector<Var>& x) { return sub(x[0], x[1]); });
  add_case("mul", {random_tensor(s4, rng), random_tensor(s4, rng)},
           [](Tape&, const std::vector<Var>& x) { return mul(x[0], x[1]); });
  add_case("mul/broadcast-channel", {random_tensor(s4, rng), random_tensor({2, 1, 4, 4}, rng)},
           [](Tape&, const std::vector<Var>& x) { return mul(x[0], x[1]); });
  add_case("add/broadcast-spatial", {random_tensor(s4, rng), random_tensor({2, 2, 1, 1}, rng)},
           [](Tape&, const std::vector<Var>& x) { return add(x[0], x[1]); });
  add_case("div", {random_tensor({1}, rng, 0.5, 2.0), random_tensor({1}, rng, 0.5, 2.0)},
           [](Tape&, const std::vector<Var>& x) { return div(x[0], x[1]); });

  add_case("concat", {random_tensor({1, 2, 3, 3}, rng), random_tensor({1, 3, 3, 3}, rng)},
           [](Tape&, const std::vector<Var>& x) { return concat({x[0], x[1]}, 1); });
  add_case("max_pool2d", {random_tensor(s4, rng)},
           [](Tape&, const std::vector<Var>& x) { return max_pool2d(x[0], 2, 2); });
  add_case("global_avg_pool", {random_tensor(s4, rng)},
           [](Tape&, const std::vector<Var>& x) { return global_avg_pool(x[0]); });
  add_case("global_max_pool", {random_tensor(s4, rng)},
           [](Tape&, const std::vector<Var>& x) { return global_max_pool(x[0]); });
  add_case("channel_mean", {random_tensor(s4, rng)},
           [](Tape&, const std::vector<Var>& x) { return channel_mean(x[0]); });
  add_case("channel_max", {random_tensor(s4, rng)},
           [](Tape&, const std::vector<Var>& x) { return channel_max(x[0]); });

  add_case("upsample_bilinear/x2", {random_tensor(s4, rng)},
           [](Tape&, const std::vector<Var>& x) { return upsample_bilinear(x[0], 8, 8); });
  add_case("upsample_bilinear/odd", {random_tensor(s4, rng)},
           [](Tape&, const std::vector<Var>& x) { return upsample_bilinear(x[0], 7, 5); });
  add_case("downsample2", {random_tensor({2, 2, 5, 5}, rng)},
           [](Tape&, const std::vector<Var>& x) { return downsample2(x[0]); });

  add_case("sum", {random_tensor(s4, rng)}, [](Tape&, const std::vector<Var>& x) { return sum(x[0]); });
  add_case("mean", {random_tensor(s4, rng)}, [](Tape&, const std::vector<Var>& x) { return mean(x[0]); });

  {
    Tensor target({2, 2, 4, 4});
    for (i64 i = 0; i < target.numel(); ++i) target[i] = rng.coin() ? 1.0 : 0.0;
    add_case("bce_with_logits", {random_tensor(s4, rng, -2, 2)},
             [target](Tape&, const std::vector<Var>& x) { return bce_with_logits(x[0], target); });
    add_case("dice_loss", {random_tensor(s4, rng, -2, 2)},
             [target](Tape&, const std::vector<Var>& x) { return dice_loss(x[0], target); });
  }

  add_case("reverse_attention", {random_tensor({1, 1, 4, 4}, rng, 0.1, 0.9)},
           [](Tape&, const std::vector<Var>& x) { return reverse_attention(x[0]); });
  add_case("boundary_attention", {random_tensor({1, 1, 6, 6}, rng, 0.1, 0.9)},
           [](Tape&, const std::vector<Var>& x) { return boundary_attention(x[0]); });

  return cases;
}

}  // namespace

GradCheckReport gradcheck_ops(uint64_t seed, double tolerance) {
  GradCheckReport report;
  report.tolerance = tolerance;
  for (int trial = 0; trial < 5; ++trial) {
    Rng rng(seed + static_cast<uint64_t>(trial) * 7919);
    for (OpCase& c : op_cases(rng)) {
      const double err = check_graph(c.inputs, c.fn, rng);
      // keep the worst trial per op name
      bool found = false;
      for (auto& e : report.entries)
        if (e.name == c.name) {
          e.max_rel_err = std::max(e.max_rel_err, err);
          e.pass = e.max_rel_err < tolerance;
          found = true;
        }
      if (!found) report.entries.push_back({c.name, err, err < tolerance});
    }
  }
  return report;
}

GradCheckReport gradcheck_ega_block(uint64_t seed, double tolerance) {
  GradCheckReport report;
  report.tolerance = tolerance;
  Rng rng(seed);

  EgaConfig cfg;
  cfg.channels = 4;
  cfg.cbam_reduction = 2;
  cfg.spatial_kernel = 3;
  ParamStore store;
  EgaParams params = make_ega_params(store, "ega", cfg, rng);

  const Tensor enc = random_tensor({1, 4, 8, 8}, rng);
  const Tensor pred = random_tensor({1, 1, 8, 8}, rng, 0.1, 0.9);
  const Tensor hf = random_tensor({1, 1, 8, 8}, rng, 0.0, 1.0);
  const Tensor proj = random_tensor({1, 4, 8, 8}, rng);

  auto forward_loss = [&](Tape& tape, bool with_grad_leaf, Var* enc_leaf_out) {
    Var enc_v = with_grad_leaf ? tape.leaf(enc, "enc") : tape.constant(enc, "enc");
    if (enc_leaf_out) *enc_leaf_out = enc_v;
    Var pred_v = tape.constant(pred, "pred");
    Var hf_v = tape.constant(hf, "hf");
    EgaOutput out = ega_forward(enc_v, pred_v, hf_v, cfg, params);
    return sum(mul(out.decoded, tape.constant(proj, "proj")));
  };

  // analytic gradients for every block parameter and the encoder input
  Tape tape;
  Var enc_leaf;
  Var loss = forward_loss(tape, true, &enc_leaf);
  backward(loss);
  std::vector<Tensor> param_grads;
  for (Parameter* p : store.all()) {
    param_grads.push_back(p->grad);
    p->grad.fill(0.0);
  }
  const Tensor enc_grad = enc_leaf.grad();

  auto eval = [&] {
    Tape t2;
    return forward_loss(t2, false, nullptr).value()[0];
  };

  double worst_params = 0;
  for (size_t pi = 0; pi < store.all().size(); ++pi) {
    Parameter* p = store.all()[pi];
    for (i64 i = 0; i < p->value.numel(); ++i) {
      const double orig = p->value[i];
      p->value[i] = orig + kStep;
      const double fp = eval();
      p->value[i] = orig - kStep;
      const double fm = eval();
      p->value[i] = orig;
      worst_params = std::max(worst_params, rel_err(param_grads[pi][i], (fp - fm) / (2 * kStep)));
    }
  }
  report.entries.push_back({"ega_block/params", worst_params, worst_params < tolerance});

  double worst_enc = 0;
  Tensor enc_mut = enc;
  for (i64 i = 0; i < enc_mut.numel(); ++i) {
    const double orig = enc_mut[i];
    auto eval_enc = [&](double v) {
      Tape t2;
      Tensor e2 = enc_mut;
      e2[i] = v;
      Var enc_v = t2.constant(e2, "enc");
      EgaOutput out = ega_forward(enc_v, t2.constant(pred, "pred"), t2.constant(hf, "hf"), cfg, params);
      return sum(mul(out.decoded, t2.constant(proj, "proj"))).value()[0];
    };
    const double numeric = (eval_enc(orig + kStep) - eval_enc(orig - kStep)) / (2 * kStep);
    worst_enc = std::max(worst_enc, rel_err(enc_grad[i], numeric));
  }
  report.entries.push_back({"ega_block/enc-input", worst_enc, worst_enc < tolerance});
  return report;
}

GradCheckReport gradcheck_network(uint64_t seed, double tolerance, int sampled_params) {
  GradCheckReport report;
  report.tolerance = tolerance;
  Rng rng(seed);

  NetworkConfig cfg;
  cfg.depth = 2;
  cfg.stem_channels = 4;
  cfg.input_h = 32;
  cfg.input_w = 32;
  cfg.ega.cbam_reduction = 2;
  Meganet net(cfg, seed);

  const Tensor image = random_tensor({3, 32, 32}, rng, 0.0, 1.0);
  Tensor batch({1, 3, 32, 32});
  for (i64 i = 0; i < image.numel(); ++i) batch[i] = image[i];
  const std::vector<Tensor> hf = net.make_hf_batch({image});

  Tensor mask({1, 32, 32});
  for (i64 i = 0; i < mask.numel(); ++i) mask[i] = rng.coin() ? 1.0 : 0.0;
  std::vector<Tensor> gt_levels;
  for (const Tensor& m : downscale_gt(mask, cfg.depth)) gt_levels.push_back(stack_masks({m}));

  auto eval = [&] {
    Tape tape;
    ForwardResult result = net.forward(tape, batch, hf);
    return total_loss(result.logits, gt_levels).value()[0];
  };

  Tape tape;
  ForwardResult result = net.forward(tape, batch, hf);
  Var loss = total_loss(result.logits, gt_levels);
  backward(loss);

  // sample parameter elements spread over all tensors
  double worst = 0;
  const auto& params = net.params().all();
  for (int k = 0; k < sampled_params; ++k) {
    Parameter* p = params[static_cast<size_t>(rng.uniform_int(0, static_cast<i64>(params.size()) - 1))];
    const i64 i = rng.uniform_int(0, p->value.numel() - 1);
    const double analytic = p->grad[i];
    const double orig = p->value[i];
    p->value[i] = orig + kStep;
    const double fp = eval();
    p->value[i] = orig - kStep;
    const double fm = eval();
    p->value[i] = orig;
    worst = std::max(worst, rel_err(analytic, (fp - fm) / (2 * kStep)));
  }
  net.params().zero_grads();
  report.entries.push_back({"network/2-level-end-to-end", worst, worst < tolerance});
  return report;
}

GradCheckReport gradcheck_all(uint64_t seed, double tolerance) {
  GradCheckReport report = gradcheck_ops(seed, tolerance);
  for (auto& e : gradcheck_ega_block(seed + 1, tolerance).entries) report.entries.push_back(e);
  for (auto& e : gradcheck_network(seed + 2, tolerance).entries) report.entries.push_back(e);
  report.tolerance = tolerance;
  return report;
}

}  // namespace megalap
