#include "sbd/proposal.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "sbd/errors.hpp"

namespace sbd {

double ProposalComponent::raw_density(const Eigen::VectorXd& t) const {
  if (const auto* p = std::get_if<PriorSpec>(&density)) return p->density_fit(t);
  return std::exp(mixture_log_prob(std::get<MixtureDensity>(density), t));
}

Eigen::VectorXd ProposalComponent::raw_sample(Rng& rng) const {
  if (const auto* p = std::get_if<PriorSpec>(&density)) return p->sample_fit(rng);
  return mixture_sample(std::get<MixtureDensity>(density), rng);
}

ProposalMixture::ProposalMixture(PriorSpec prior) : prior_(std::move(prior)) {
  components_.push_back(ProposalComponent{prior_, 1.0});
}

ProposalMixture ProposalMixture::with_component(ProposalComponent c) const {
  if (!(c.support_mass > 0.0) || c.support_mass > 1.0 + 1e-12) {
    throw std::invalid_argument("proposal component support mass must lie in (0, 1]");
  }
  ProposalMixture out = *this;
  out.components_.push_back(std::move(c));
  return out;
}

double proposal_density(const ProposalMixture& q, const Eigen::VectorXd& t) {
  if (!q.prior().in_support_fit(t)) {
    throw std::invalid_argument("proposal_density: parameter outside the prior support");
  }
  double s = 0.0;
  for (std::size_t j = 0; j < q.size(); ++j) {
    const ProposalComponent& c = q.component(j);
    s += c.raw_density(t) / c.support_mass;
  }
  return s / double(q.size());
}

double importance_weight(const PriorSpec& prior, const ProposalMixture& q, const Eigen::VectorXd& t) {
  const double p = prior.density_fit(t);
  const double qd = proposal_density(q, t);
  const double w = p / qd;
  if (!(w > 0.0) || !std::isfinite(w)) {
    throw std::invalid_argument("importance weight is not positive and finite");
  }
  return w;
}

std::vector<Eigen::VectorXd> sample_proposal(const ProposalMixture& q, int count, Rng& rng) {
  if (count < 1) throw std::invalid_argument("sample_proposal: count must be positive");
  std::vector<Eigen::VectorXd> out;
  out.reserve(std::size_t(count));
  std::uniform_int_distribution<std::size_t> pick(0, q.size() - 1);
  for (int k = 0; k < count; ++k) {
    const ProposalComponent& c = q.component(pick(rng));
    bool ok = false;
    for (int attempt = 0; attempt < kMaxRejectionAttempts; ++attempt) {
      Eigen::VectorXd t = c.raw_sample(rng);
      if (q.prior().in_support_fit(t)) {
        out.push_back(std::move(t));
        ok = true;
        break;
      }
    }
    if (!ok) {
      throw ProposalDegeneracyError("proposal component produced no in-support draw in " +
                                    std::to_string(kMaxRejectionAttempts) + " attempts");
    }
  }
  return out;
}

ProposalComponent truncate_to_support(MixtureDensity mix, const PriorSpec& prior, int draws, Rng& rng) {
  if (draws < 1) throw std::invalid_argument("truncate_to_support: draws must be positive");
  int inside = 0;
  for (int i = 0; i < draws; ++i)
    if (prior.in_support_fit(mixture_sample(mix, rng))) ++inside;
  if (inside == 0) {
    throw ProposalDegeneracyError("posterior proposal has no estimated mass inside the prior support");
  }
  return ProposalComponent{std::move(mix), double(inside) / double(draws)};
}

ProposalMixture update_proposal(const ProposalMixture& q, const MdnParameters& posterior,
                                const Eigen::VectorXd& x_star, Rng& rng, int mass_draws) {
  if (posterior.arch.target_dim != q.prior().dim()) {
    throw std::invalid_argument("update_proposal: posterior target dimension does not match the prior");
  }
  MixtureDensity mix = mdn_forward(posterior, x_star);
  return q.with_component(truncate_to_support(std::move(mix), q.prior(), mass_draws, rng));
}

}  // namespace sbd
