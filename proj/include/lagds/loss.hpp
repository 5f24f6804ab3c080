#pragma once
// Adversarial objective terms: WGAN scores, gradient penalty on
// interpolates, and the center regularizer on critic projections.

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>

#include "lagds/autograd.hpp"
#include "lagds/net.hpp"

namespace lagds {

// A loss term became NaN or infinite.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& term, const std::string& detail)
      : std::runtime_error("divergence in " + term + ": " + detail), term_(term) {}
  const std::string& term() const { return term_; }

 private:
  std::string term_;
};

struct LossWeights {
  double lambda_gp = 10.0;
  double lambda_center = 10.0;
  void validate() const;
};

struct LossTerms {
  double wgan_critic = 0;     // mean real score - mean fake score
  double wgan_generator = 0;  // -mean fake score
  double gradient_penalty = 0;
  double center = 0;
};

struct LossBreakdown {
  double wgan_critic = 0;
  double wgan_generator = 0;
  double gradient_penalty = 0;
  double center = 0;
  double total_critic = 0;
  double total_generator = 0;
};

struct WganTerms {
  double critic = 0;
  double generator = 0;
};

WganTerms wgan_terms(std::span<const double> scores_real, std::span<const double> scores_fake);

// x_i * u_i + g_i * (1 - u_i), one u per sample.
Tensor interpolate_pairs(const Tensor& x, const Tensor& g, std::span<const double> u);

// Per-sample critic scores (N x 1 x 1 x 1) as a function of the critic input.
using CriticFn = std::function<ag::Var(const ag::Var&)>;

// mean_n (|grad_{xhat_n} sum C|_2 - 1)^2, differentiable with respect to
// whatever the critic function closes over.
ag::Var gradient_penalty(const CriticFn& critic, const Tensor& xhat);
ag::Var gradient_penalty(const Critic& critic, std::span<const ag::Var> params, const Tensor& xhat,
                         const ag::Var& y, StagePosition pos);

// Squared distance between projections, summed per sample, averaged over the batch.
ag::Var center_loss(const ag::Var& proj_truth, const ag::Var& proj_center);

// Throws DivergenceError naming the first non-finite term.
LossBreakdown total_losses(const LossTerms& terms, const LossWeights& weights);

std::string loss_log_header();
std::string loss_log_row(std::int64_t step, int phase, int stage, double alpha,
                         const LossBreakdown& b);

}  // namespace lagds
