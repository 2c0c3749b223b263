#include "sbd/lotka_volterra.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "sbd/errors.hpp"

namespace sbd {

void LvConfig::validate() const {
  if (!(cull_effectiveness >= 0.0)) throw std::invalid_argument("cull effectiveness must be >= 0");
  if (!(threshold > 0.0)) throw std::invalid_argument("threshold must be > 0");
  if (!(hunter_day_cost >= 0.0 && crop_day_cost >= 0.0)) throw std::invalid_argument("costs must be >= 0");
  if (initial_deer < 0 || initial_wolves < 0) throw std::invalid_argument("initial populations must be >= 0");
  if (history_weeks < 3 || future_weeks < 1) throw std::invalid_argument("observation windows too short");
  if (population_cap < 1 || event_budget < 1) throw std::invalid_argument("cap and event budget must be positive");
}

LvTrajectory lv_trajectory(const Eigen::VectorXd& theta, int deer0, int wolves0, double t0, int weeks,
                           int hunters, double cull_start, double cull_end, const LvConfig& cfg, Rng& rng) {
  if (theta.size() != 4 || !(theta.array() > 0.0).all()) {
    throw std::invalid_argument("lotka-volterra parameters must be 4 positive values");
  }
  const double p0 = theta(0), p1 = theta(1), p2 = theta(2), p3 = theta(3);
  const double r = cfg.cull_effectiveness;
  long d = deer0, w = wolves0;
  double t = t0;
  LvTrajectory out;
  out.deer.reserve(std::size_t(weeks));
  out.wolves.reserve(std::size_t(weeks));
  int next_obs = 1;
  bool frozen = false;
  auto observe_until = [&](double time) {
    while (next_obs <= weeks && t0 + next_obs <= time) {
      out.deer.push_back(int(d));
      out.wolves.push_back(int(w));
      ++next_obs;
    }
  };
  const double t_end = t0 + weeks;
  while (next_obs <= weeks) {
    if (frozen) {
      observe_until(t_end);
      break;
    }
    const bool culling = hunters > 0 && t >= cull_start && t < cull_end;
    double rates[5];
    if (cfg.prose_literal_rates) {
      rates[0] = p0 * double(w);              // wolf birth
      rates[1] = p2 * double(w);              // wolf death
      rates[2] = p3 * double(d);              // deer birth
      rates[3] = p1 * double(w) * double(d);  // predation
    } else {
      rates[0] = p0 * double(w) * double(d);
      rates[1] = p1 * double(w);
      rates[2] = p2 * double(d);
      rates[3] = p3 * double(w) * double(d);
    }
    rates[4] = culling ? r * double(hunters) * double(d) : 0.0;
    const double total = rates[0] + rates[1] + rates[2] + rates[3] + rates[4];
    // next time at which the rate law changes
    double boundary = t_end;
    if (hunters > 0 && t < cull_start) boundary = std::min(boundary, cull_start);
    else if (culling) boundary = std::min(boundary, cull_end);
    if (total <= 0.0) {
      observe_until(boundary);
      t = boundary;
      continue;
    }
    const double dt = -std::log1p(-uniform01(rng)) / total;
    if (t + dt >= boundary) {
      // memoryless: discard the pending event and restart at the boundary
      observe_until(boundary);
      t = boundary;
      continue;
    }
    observe_until(t + dt);
    t += dt;
    double u = uniform01(rng) * total;
    int k = 0;
    while (k < 4 && u >= rates[k]) u -= rates[k++];
    if (rates[k] == 0.0) {
      k = 4;
      while (k > 0 && rates[k] == 0.0) --k;
    }
    switch (k) {
      case 0: ++w; break;
      case 1: --w; break;
      case 2: ++d; break;
      default: --d; break;
    }
    d = std::max<long>(d, 0);
    w = std::max<long>(w, 0);
    ++out.events;
    if (d >= cfg.population_cap || w >= cfg.population_cap) {
      d = std::min<long>(d, cfg.population_cap);
      w = std::min<long>(w, cfg.population_cap);
      out.capped = true;
      frozen = true;
    } else if (out.events >= cfg.event_budget) {
      out.budget_exhausted = true;
      frozen = true;
    }
  }
  return out;
}

double lv_utility(const Eigen::VectorXd& future_deer, const Eigen::VectorXd& action, const LvConfig& cfg) {
  if (action.size() != 2) throw std::invalid_argument("deer action must be (hunters, months)");
  const double hunter_cost = cfg.cull_cost_duration
                                 ? action(0) * cfg.hunter_day_cost * (action(1) * 4.0 * 7.0)
                                 : action(0) * cfg.hunter_day_cost;
  double crop = 0.0;
  for (Eigen::Index i = 0; i < future_deer.size(); ++i) {
    const double y = future_deer(i);
    if (y > cfg.threshold) crop += 7.0 * (cfg.excess_only ? y - cfg.threshold : y);
  }
  return -hunter_cost - cfg.crop_day_cost * crop;
}

namespace {

void autocorrelations(const Eigen::VectorXd& s, double& ac1, double& ac2, bool& degenerate) {
  const Eigen::Index n = s.size();
  const Eigen::VectorXd c = s.array() - s.mean();
  const double ss = c.squaredNorm();
  if (!(ss > 0.0)) {
    ac1 = ac2 = 0.0;
    degenerate = true;
    return;
  }
  ac1 = c.head(n - 1).dot(c.tail(n - 1)) / ss;
  ac2 = c.head(n - 2).dot(c.tail(n - 2)) / ss;
}

}  // namespace

Eigen::VectorXd lv_summaries(const Eigen::VectorXd& history, bool* degenerate) {
  if (history.size() < 6 || history.size() % 2 != 0) {
    throw std::invalid_argument("lotka-volterra history must hold two equal-length series");
  }
  const Eigen::Index n = history.size() / 2;
  const Eigen::VectorXd dd = history.head(n), ww = history.tail(n);
  bool flag = false;
  Eigen::VectorXd s(kLvSummaryCount);
  s(0) = dd.mean();
  s(1) = ww.mean();
  const Eigen::VectorXd cd = dd.array() - s(0), cw = ww.array() - s(1);
  s(2) = cd.squaredNorm() / double(n - 1);
  s(3) = cw.squaredNorm() / double(n - 1);
  autocorrelations(dd, s(4), s(5), flag);
  autocorrelations(ww, s(6), s(7), flag);
  const double denom = std::sqrt(cd.squaredNorm() * cw.squaredNorm());
  if (denom > 0.0) {
    s(8) = std::clamp(cd.dot(cw) / denom, -1.0, 1.0);
  } else {
    s(8) = 0.0;
    flag = true;
  }
  if (degenerate) *degenerate = flag;
  return s;
}

PriorSpec lv_prior() {
  const ParameterPrior p = ParameterPrior::log_uniform(std::exp(-5.0), std::exp(2.0));
  return PriorSpec({p, p, p, p});
}

ActionSpace lv_action_space(int resolution) {
  ActionSpace s;
  s.lo = Eigen::Vector2d(0.0, 0.0);
  s.hi = Eigen::Vector2d(20.0, 8.0);
  s.resolution = {resolution, resolution};
  s.validate();
  return s;
}

Eigen::VectorXd lv_true_parameters() { return Eigen::Vector4d(0.01, 0.5, 1.0, 0.01); }

namespace {

Eigen::VectorXd flatten(const LvTrajectory& tr, std::size_t from, std::size_t count) {
  Eigen::VectorXd x(Eigen::Index(2 * count));
  for (std::size_t i = 0; i < count; ++i) {
    x(Eigen::Index(i)) = tr.deer[from + i];
    x(Eigen::Index(count + i)) = tr.wolves[from + i];
  }
  return x;
}

}  // namespace

Eigen::VectorXd lv_fixture(const LvConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng = make_rng(seed, "deer-fixture");
  const LvTrajectory tr = lv_trajectory(lv_true_parameters(), cfg.initial_deer, cfg.initial_wolves, 0.0,
                                        cfg.history_weeks, 0, 0.0, 0.0, cfg, rng);
  return flatten(tr, 0, std::size_t(cfg.history_weeks));
}

Eigen::VectorXd read_deer_fixture(const std::string& path) {
  const Eigen::MatrixXd m = read_numeric_csv(path);
  if (m.cols() != 3) throw IoError("deer fixture must have columns week,deer,wolves");
  Eigen::VectorXd x(2 * m.rows());
  x << m.col(1), m.col(2);
  return x;
}

Eigen::VectorXd Compressor::compress(const Eigen::VectorXd& summaries) const {
  if (summaries.size() != kLvSummaryCount) throw std::invalid_argument("compressor expects 9 summaries");
  Eigen::VectorXd in = summaries;
  for (int i = 0; i < 4; ++i) in(i) = std::log1p(std::max(0.0, in(i)));
  const Eigen::VectorXd out = network.forward(input_scaling.apply(in)).col(0);
  return output_scaling.invert(out);
}

namespace {

Eigen::MatrixXd preprocess(const Eigen::MatrixXd& summaries) {
  Eigen::MatrixXd in = summaries;
  in.leftCols(4) = in.leftCols(4).unaryExpr([](double v) { return std::log1p(std::max(0.0, v)); });
  return in;
}

double mse(const Mlp& net, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, const std::vector<Eigen::Index>& idx,
           Eigen::VectorXd* grad) {
  Eigen::MatrixXd xb(x.rows(), Eigen::Index(idx.size())), yb(y.rows(), Eigen::Index(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) {
    xb.col(Eigen::Index(k)) = x.col(idx[k]);
    yb.col(Eigen::Index(k)) = y.col(idx[k]);
  }
  Mlp::Tape tape;
  const Eigen::MatrixXd out = grad ? net.forward(xb, tape) : net.forward(xb);
  const Eigen::MatrixXd diff = out - yb;
  const double denom = double(diff.size());
  if (grad) *grad = net.backward(tape, 2.0 * diff / denom);
  return diff.squaredNorm() / denom;
}

}  // namespace

CompressorTrainingResult train_compression_net(const Eigen::MatrixXd& summaries, const Eigen::MatrixXd& log_theta,
                                               const CompressorTrainingConfig& cfg) {
  const Eigen::Index n = summaries.rows();
  if (summaries.cols() != kLvSummaryCount || log_theta.cols() != 4 || log_theta.rows() != n) {
    throw std::invalid_argument("compression set must be n x 9 summaries and n x 4 targets");
  }
  if (n < 5000) throw std::invalid_argument("compression network needs at least 5000 prior simulations");
  if (!summaries.allFinite() || !log_theta.allFinite()) throw std::invalid_argument("compression set is not finite");

  const Eigen::MatrixXd pre = preprocess(summaries);
  CompressorTrainingResult result;
  Compressor& c = result.compressor;
  c.input_scaling = Standardizer::fit(pre);
  c.output_scaling = Standardizer::fit(log_theta);
  const Eigen::MatrixXd x = c.input_scaling.apply_rows(pre).transpose();
  const Eigen::MatrixXd y = c.output_scaling.apply_rows(log_theta).transpose();

  Rng init_rng = make_rng(cfg.seed, "compressor-init");
  Mlp net = Mlp::create(kLvSummaryCount, {128, 128}, 4, Activation::leaky_relu, init_rng, false);

  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  {
    Rng split = make_rng(cfg.seed, "compressor-split");
    std::shuffle(perm.begin(), perm.end(), split);
  }
  const auto n_val = std::size_t(std::max<long>(1, std::lround(cfg.validation_fraction * double(n))));
  std::vector<Eigen::Index> val(perm.begin(), perm.begin() + long(n_val));
  std::vector<Eigen::Index> train(perm.begin() + long(n_val), perm.end());
  std::sort(val.begin(), val.end());
  std::sort(train.begin(), train.end());

  Eigen::VectorXd params = net.parameters();
  Adam adam(params.size(), cfg.learning_rate);
  double best = mse(net, x, y, val, nullptr);
  c.network = net;
  int wait = 0;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::vector<Eigen::Index> order = train;
    Rng rng = make_rng(cfg.seed, "compressor-epoch", std::uint64_t(epoch));
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += std::size_t(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + std::size_t(cfg.batch_size));
      std::vector<Eigen::Index> idx(order.begin() + long(start), order.begin() + long(end));
      Eigen::VectorXd g;
      const double loss = mse(net, x, y, idx, &g);
      if (!std::isfinite(loss)) throw TrainingError("compression network loss is not finite", epoch);
      total += loss * double(end - start);
      adam.step(params, g);
      net.set_parameters(params);
    }
    result.train_loss.push_back(total / double(order.size()));
    const double v = mse(net, x, y, val, nullptr);
    result.validation_loss.push_back(v);
    if (v < best) {
      best = v;
      c.network = net;
      result.best_epoch = epoch;
      wait = 0;
    } else if (++wait >= cfg.patience) {
      break;
    }
  }
  return result;
}

CompressionSet lv_prior_simulations(const LvConfig& cfg, int n, std::uint64_t seed, int threads) {
  cfg.validate();
  const PriorSpec prior = lv_prior();
  CompressionSet set;
  set.summaries.resize(n, kLvSummaryCount);
  set.log_theta.resize(n, 4);
  auto work = [&](int begin, int stride) {
    for (int i = begin; i < n; i += stride) {
      Rng rng = make_rng(seed, "compression-sim", 0, std::uint64_t(i));
      const Eigen::VectorXd t = prior.sample_fit(rng);
      const LvTrajectory tr = lv_trajectory(prior.from_fit(t), cfg.initial_deer, cfg.initial_wolves, 0.0,
                                            cfg.history_weeks, 0, 0.0, 0.0, cfg, rng);
      set.summaries.row(i) = lv_summaries(flatten(tr, 0, std::size_t(cfg.history_weeks))).transpose();
      set.log_theta.row(i) = t.transpose();
    }
  };
  threads = std::max(1, threads);
  if (threads == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (int k = 0; k < threads; ++k) pool.emplace_back(work, k, threads);
    for (auto& th : pool) th.join();
  }
  return set;
}

DeerProblem::DeerProblem(LvConfig cfg, Eigen::VectorXd observed, int resolution)
    : cfg_(cfg), prior_(lv_prior()), space_(lv_action_space(resolution)), observed_(std::move(observed)) {
  cfg_.validate();
  if (observed_.size() != 2 * cfg_.history_weeks) {
    throw std::invalid_argument("deer observations must cover the history window");
  }
}

DeerProblem::DeerProblem(LvConfig cfg, int resolution)
    : DeerProblem(cfg, read_deer_fixture(data_path("deer_observed.csv")), resolution) {}

const Compressor& DeerProblem::compressor() const {
  if (!compressor_) throw std::logic_error("deer problem used before its compression network was trained");
  return *compressor_;
}

Eigen::VectorXd DeerProblem::features(const Eigen::VectorXd& history) const {
  return compressor().compress(lv_summaries(history));
}

SimulationResult DeerProblem::do_simulate(const Eigen::VectorXd& theta, const Eigen::VectorXd& action,
                                          Rng& rng) const {
  const int hunters = int(std::lround(action(0)));
  const double start = cfg_.history_weeks;
  const LvTrajectory tr = lv_trajectory(theta, cfg_.initial_deer, cfg_.initial_wolves, 0.0,
                                        cfg_.history_weeks + cfg_.future_weeks, hunters, start,
                                        start + 4.0 * action(1), cfg_, rng);
  SimulationResult r;
  r.history = flatten(tr, 0, std::size_t(cfg_.history_weeks));
  r.outcome.resize(cfg_.future_weeks);
  for (int i = 0; i < cfg_.future_weeks; ++i) r.outcome(i) = tr.deer[std::size_t(cfg_.history_weeks + i)];
  r.utility = lv_utility(r.outcome, action, cfg_);
  r.flagged = tr.capped || tr.budget_exhausted;
  return r;
}

SimulationResult DeerProblem::do_simulate_outcome(const Eigen::VectorXd& theta, const Eigen::VectorXd& action,
                                                  Rng& rng) const {
  const int hunters = int(std::lround(action(0)));
  const Eigen::Index n = cfg_.history_weeks;
  const double start = n;
  const LvTrajectory tr = lv_trajectory(theta, int(observed_(n - 1)), int(observed_(2 * n - 1)), start,
                                        cfg_.future_weeks, hunters, start, start + 4.0 * action(1), cfg_, rng);
  SimulationResult r;
  r.history = observed_;
  r.outcome.resize(cfg_.future_weeks);
  for (int i = 0; i < cfg_.future_weeks; ++i) r.outcome(i) = tr.deer[std::size_t(i)];
  r.utility = lv_utility(r.outcome, action, cfg_);
  r.flagged = tr.capped || tr.budget_exhausted;
  return r;
}

}  // namespace sbd
