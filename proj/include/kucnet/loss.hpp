#pragma once

#include <cmath>

namespace kucnet {

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// log(1 + exp(x)) without overflow.
inline double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

struct BprTerm {
  double loss = 0;
  double d_pos = 0;  // d loss / d pos_logit
  double d_neg = 0;  // d loss / d neg_logit
};

// -ln sigmoid(pos - neg) = softplus(neg - pos).
inline BprTerm bpr_loss(double pos_logit, double neg_logit) {
  const double margin = pos_logit - neg_logit;
  const double g = sigmoid(-margin);
  return {softplus(-margin), -g, g};
}

}  // namespace kucnet
