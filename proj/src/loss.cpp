#include "lagds/loss.hpp"

#include <cmath>
#include <cstdio>
#include <vector>

namespace lagds {

using ag::Var;

void LossWeights::validate() const {
  if (!(std::isfinite(lambda_gp) && lambda_gp >= 0.0)) {
    throw std::invalid_argument("lambda_gp must be finite and >= 0");
  }
  if (!(std::isfinite(lambda_center) && lambda_center >= 0.0)) {
    throw std::invalid_argument("lambda_center must be finite and >= 0");
  }
}

namespace {

double mean(std::span<const double> v) {
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

void require_finite(const char* term, double v) {
  if (!std::isfinite(v)) throw DivergenceError(term, "value is " + std::to_string(v));
}

}  // namespace

WganTerms wgan_terms(std::span<const double> scores_real, std::span<const double> scores_fake) {
  if (scores_real.empty() || scores_fake.empty()) {
    throw std::invalid_argument("wgan_terms: score lists must be non-empty");
  }
  const double fake = mean(scores_fake);
  return {mean(scores_real) - fake, -fake};
}

Tensor interpolate_pairs(const Tensor& x, const Tensor& g, std::span<const double> u) {
  if (!(x.shape() == g.shape())) {
    throw std::invalid_argument("interpolate_pairs: shapes " + x.shape().str() + " and " +
                                g.shape().str() + " differ");
  }
  if (u.size() != static_cast<std::size_t>(x.shape().n)) {
    throw std::invalid_argument("interpolate_pairs: need one u per sample");
  }
  Tensor out(x.shape());
  const std::size_t per = x.shape().sample_size();
  for (int n = 0; n < x.shape().n; ++n) {
    const double un = u[n];
    if (!(un >= 0.0 && un <= 1.0)) throw std::invalid_argument("interpolate_pairs: u outside [0, 1]");
    const double* xs = x.sample(n);
    const double* gs = g.sample(n);
    double* o = out.sample(n);
    for (std::size_t i = 0; i < per; ++i) o[i] = un * xs[i] + (1.0 - un) * gs[i];
  }
  return out;
}

Var gradient_penalty(const CriticFn& critic, const Tensor& xhat) {
  ag::GradMode enable(true);
  const Var input(xhat, true);
  const Var scores = critic(input);
  const std::vector<Var> inputs{input};
  const Var g = ag::grad(ag::sum_all(scores), inputs, true)[0];
  if (!g.value().all_finite()) throw DivergenceError("gradient_penalty", "non-finite critic gradient");
  const Var norms = ag::sqrt(ag::sum_per_sample(ag::square(g)));
  return ag::mean_all(ag::square(ag::add_scalar(norms, -1.0)));
}

Var gradient_penalty(const Critic& critic, std::span<const Var> params, const Tensor& xhat,
                     const Var& y, StagePosition pos) {
  return gradient_penalty(
      [&](const Var& in) { return critic_score(critic.project(params, in, y, pos)); }, xhat);
}

Var center_loss(const Var& proj_truth, const Var& proj_center) {
  if (!(proj_truth.shape() == proj_center.shape())) {
    throw std::invalid_argument("center_loss: projection shapes " + proj_truth.shape().str() +
                                " and " + proj_center.shape().str() + " differ");
  }
  const Var per_sample = ag::sum_per_sample(ag::square(ag::sub(proj_truth, proj_center)));
  return ag::mean_all(per_sample);
}

LossBreakdown total_losses(const LossTerms& t, const LossWeights& w) {
  require_finite("wgan_critic", t.wgan_critic);
  require_finite("wgan_generator", t.wgan_generator);
  require_finite("gradient_penalty", t.gradient_penalty);
  require_finite("center", t.center);
  LossBreakdown b;
  b.wgan_critic = t.wgan_critic;
  b.wgan_generator = t.wgan_generator;
  b.gradient_penalty = t.gradient_penalty;
  b.center = t.center;
  b.total_critic = -t.wgan_critic + w.lambda_gp * t.gradient_penalty;
  b.total_generator = t.wgan_generator + w.lambda_center * t.center;
  return b;
}

std::string loss_log_header() {
  return "step\tphase\tstage\talpha\twgan_critic\twgan_generator\tgradient_penalty\tcenter\t"
         "total_critic\ttotal_generator";
}

std::string loss_log_row(std::int64_t step, int phase, int stage, double alpha,
                         const LossBreakdown& b) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%lld\t%d\t%d\t%.17g\t%.17g\t%.17g\t%.17g\t%.17g\t%.17g\t%.17g",
                static_cast<long long>(step), phase, stage, alpha, b.wgan_critic, b.wgan_generator,
                b.gradient_penalty, b.center, b.total_critic, b.total_generator);
  return buf;
}

}  // namespace lagds
