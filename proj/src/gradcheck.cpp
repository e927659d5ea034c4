#include "scavit/gradcheck.hpp"

#include <chrono>
#include <cmath>
#include <vector>

#include "scavit/errors.hpp"
#include "scavit/ops.hpp"

namespace scavit {

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::fabs(analytic), std::fabs(numeric), floor});
  return std::fabs(analytic - numeric) / denom;
}

namespace {

enum class StageKind { small, large, fusion, head };

struct Stage {
  StageKind kind;
  std::size_t index;  // branch: 0 = embedding, i + 1 = block i; fusion: round
};

Stage stage_of(const std::string& name) {
  auto number_after = [&](std::size_t pos) {
    std::size_t end = pos;
    while (end < name.size() && std::isdigit(static_cast<unsigned char>(name[end]))) ++end;
    return static_cast<std::size_t>(std::stoul(name.substr(pos, end - pos)));
  };
  for (auto [prefix, kind] :
       {std::pair{"small.", StageKind::small}, std::pair{"large.", StageKind::large}}) {
    const std::string p = prefix;
    if (name.rfind(p, 0) != 0) continue;
    if (name.rfind(p + "embed.", 0) == 0) return {kind, 0};
    if (name.rfind(p + "block", 0) == 0) return {kind, number_after(p.size() + 5) + 1};
  }
  if (name.rfind("fusion", 0) == 0) return {StageKind::fusion, number_after(6)};
  if (name.rfind("head.", 0) == 0) return {StageKind::head, 0};
  throw ValueError("gradcheck: cannot place parameter " + name);
}

// Values of every stage boundary for the unperturbed model.
struct StageCache {
  std::vector<Tensor> small;  // [0] after embedding, [i + 1] after block i
  std::vector<Tensor> large;
  std::vector<std::pair<Tensor, Tensor>> fusion_in;  // [r] before round r, [C] after the last
};

StageCache build_cache(CrossVit& model, const Tensor& image) {
  const auto& c = model.config();
  Graph g(false);
  Rng rng(0);
  StageCache cache;
  TokenSequence s = model.embed_branch(g, image, true, false, rng);
  TokenSequence l = model.embed_branch(g, image, false, false, rng);
  cache.small.push_back(s.tokens.value());
  cache.large.push_back(l.tokens.value());
  for (std::size_t i = 0; i < c.depth; ++i) {
    s = model.run_block(s, true, i, false, rng);
    l = model.run_block(l, false, i, false, rng);
    cache.small.push_back(s.tokens.value());
    cache.large.push_back(l.tokens.value());
  }
  cache.fusion_in.emplace_back(s.tokens.value(), l.tokens.value());
  for (std::size_t r = 0; r < c.cls_depth; ++r) {
    std::tie(s, l) = model.run_fusion(s, l, r, false, rng);
    cache.fusion_in.emplace_back(s.tokens.value(), l.tokens.value());
  }
  return cache;
}

double loss_from(CrossVit& model, const Tensor& image, int label, const StageCache& cache,
                 Stage start) {
  const auto& c = model.config();
  Graph g(false);
  Rng rng(0);
  auto constant = [&g](const Tensor& t) { return TokenSequence{g.constant(t), true}; };
  auto run_branch = [&](bool small, std::size_t from) {
    const auto& stored = small ? cache.small : cache.large;
    TokenSequence seq;
    std::size_t first_block = 0;
    if (from == 0) {
      seq = model.embed_branch(g, image, small, false, rng);
    } else {
      seq = constant(stored[from - 1]);
      first_block = from - 1;
    }
    for (std::size_t i = first_block; i < c.depth; ++i)
      seq = model.run_block(seq, small, i, false, rng);
    return seq;
  };

  TokenSequence s, l;
  std::size_t first_round = 0;
  switch (start.kind) {
    case StageKind::small:
      s = run_branch(true, start.index);
      l = constant(cache.large.back());
      break;
    case StageKind::large:
      s = constant(cache.small.back());
      l = run_branch(false, start.index);
      break;
    case StageKind::fusion:
      s = constant(cache.fusion_in[start.index].first);
      l = constant(cache.fusion_in[start.index].second);
      first_round = start.index;
      break;
    case StageKind::head:
      l = constant(cache.fusion_in.back().second);
      first_round = c.cls_depth;
      break;
  }
  for (std::size_t r = first_round; r < c.cls_depth; ++r) {
    std::tie(s, l) = model.run_fusion(s, l, r, false, rng);
  }
  const int labels[] = {label};
  return ops::cross_entropy(model.head(l), labels).value().item();
}

}  // namespace

GradcheckReport gradcheck(CrossVit& model, const Tensor& image, int label,
                          const GradcheckOptions& options) {
  const auto start_time = std::chrono::steady_clock::now();
  GradcheckReport report;

  model.zero_grad();
  {
    Graph g;
    Rng rng(0);
    const int labels[] = {label};
    Var loss = ops::cross_entropy(model.forward_image(g, image, false, rng), labels);
    g.backward(loss);
  }
  const StageCache cache = build_cache(model, image);

  model.visit_parameters([&](const std::string& name, Tensor& t) {
    if (!t.requires_grad()) return;
    const Stage stage = stage_of(name);
    const std::vector<double> analytic(t.grad().begin(), t.grad().end());
    auto values = t.mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double original = values[i];
      values[i] = original + options.step;
      const double plus = loss_from(model, image, label, cache, stage);
      values[i] = original - options.step;
      const double minus = loss_from(model, image, label, cache, stage);
      values[i] = original;
      const double numeric = (plus - minus) / (2.0 * options.step);
      const double err = relative_error(analytic[i], numeric, options.floor);
      ++report.checked;
      if (err > report.max_rel_error || report.worst_parameter.empty()) {
        report.max_rel_error = err;
        report.worst_parameter = name;
        report.worst_index = i;
        report.worst_analytic = analytic[i];
        report.worst_numeric = numeric;
      }
    }
  });
  model.zero_grad();
  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start_time).count();
  return report;
}

}  // namespace scavit
