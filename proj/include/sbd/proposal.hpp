#pragma once

#include <cstddef>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "sbd/mdn.hpp"
#include "sbd/prior.hpp"
#include "sbd/random.hpp"

namespace sbd {

inline constexpr int kMaxRejectionAttempts = 10000;
inline constexpr int kDefaultMassDraws = 10000;

// One proposal q_j, truncated to the prior support. `support_mass` is the
// probability q_j assigns to that support, used to renormalize the density.
struct ProposalComponent {
  std::variant<PriorSpec, MixtureDensity> density;
  double support_mass = 1.0;

  double raw_density(const Eigen::VectorXd& t) const;
  Eigen::VectorXd raw_sample(Rng& rng) const;
};

// Equally weighted mixture {q_0, ..., q_n} over fit-space parameters, with
// q_0 the prior. Immutable: updates return a new mixture.
class ProposalMixture {
 public:
  explicit ProposalMixture(PriorSpec prior);

  const PriorSpec& prior() const { return prior_; }
  std::size_t size() const { return components_.size(); }
  const ProposalComponent& component(std::size_t j) const { return components_.at(j); }

  ProposalMixture with_component(ProposalComponent c) const;

 private:
  PriorSpec prior_;
  std::vector<ProposalComponent> components_;
};

// (1/(n+1)) sum_j q_j(t) / mass_j; throws std::invalid_argument outside the
// prior support.
double proposal_density(const ProposalMixture& q, const Eigen::VectorXd& t);

// P(t) / Q(t).
double importance_weight(const PriorSpec& prior, const ProposalMixture& q, const Eigen::VectorXd& t);

// Uniform component choice, then rejection to the prior support.
std::vector<Eigen::VectorXd> sample_proposal(const ProposalMixture& q, int count, Rng& rng);

// Monte-Carlo estimate of the in-support mass of `mix`.
ProposalComponent truncate_to_support(MixtureDensity mix, const PriorSpec& prior, int draws, Rng& rng);

// Appends mdn_forward(posterior, x_star) as a new component.
ProposalMixture update_proposal(const ProposalMixture& q, const MdnParameters& posterior,
                                const Eigen::VectorXd& x_star, Rng& rng,
                                int mass_draws = kDefaultMassDraws);

}  // namespace sbd
