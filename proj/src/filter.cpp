#include "mpcrl/filter.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <string>

#include "mpcrl/io.hpp"

namespace mpcrl {

nlohmann::json Transition::to_json() const {
  nlohmann::json j;
  j["x_bar"] = state_to_json(x_bar);
  j["u_bar"] = u_bar;
  j["x_plus"] = state_to_json(x_plus);
  j["margin_bar"] = state_to_json(margin_bar);
  j["gust_seed"] = gust_seed;
  j["pair_id"] = pair_id;
  return j;
}

Transition Transition::from_json(const nlohmann::json& j) {
  Transition t;
  t.x_bar = state_from_json(j.at("x_bar"));
  t.u_bar = j.at("u_bar").get<double>();
  t.x_plus = state_from_json(j.at("x_plus"));
  t.margin_bar = state_from_json(j.at("margin_bar"));
  t.gust_seed = j.at("gust_seed").get<std::uint64_t>();
  t.pair_id = j.at("pair_id").get<int>();
  return t;
}

TransitionDb::TransitionDb(std::vector<Transition> base, const State& scale)
    : base_(std::make_shared<const std::vector<Transition>>(std::move(base))),
      scale_(scale),
      inv_scale_(scale.cwiseInverse()) {
  if (!((scale.array() > 0.0).all())) throw ConfigError("transition db scale must be positive");
}

const Transition& TransitionDb::at(std::size_t i) const {
  return i < base_->size() ? (*base_)[i] : overlay_.at(i - base_->size());
}

void TransitionDb::insert(Transition t) { overlay_.push_back(std::move(t)); }

double TransitionDb::distance(const State& a, const State& b) const {
  return (a - b).cwiseProduct(inv_scale_).norm();
}

std::vector<Neighbor> TransitionDb::query(const State& x, int k, double r_max) const {
  std::vector<Neighbor> all;
  const std::size_t n = size();
  all.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double d = distance(x, at(i).x_bar);
    if (d <= r_max) all.push_back({i, d});
  }
  const auto by_distance = [](const Neighbor& a, const Neighbor& b) {
    return a.distance < b.distance || (a.distance == b.distance && a.index < b.index);
  };
  const std::size_t keep = std::min(all.size(), static_cast<std::size_t>(std::max(k, 0)));
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(keep), all.end(),
                    by_distance);
  all.resize(keep);
  return all;
}

void TransitionDb::write_jsonl(std::ostream& os) const {
  for (std::size_t i = 0; i < size(); ++i) os << at(i).to_json().dump() << '\n';
}

TransitionDb TransitionDb::read_jsonl(std::istream& is, const State& scale) {
  std::vector<Transition> rows;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    rows.push_back(Transition::from_json(nlohmann::json::parse(line)));
  }
  return TransitionDb(std::move(rows), scale);
}

namespace {

double weighted_norm(const State& v, const State& weights) {
  return std::sqrt(weights.dot(v.cwiseProduct(v)));
}

State checked(const Dynamics& f, const State& x, double u, double w) {
  State y = f(x, u, w);
  if (!y.allFinite()) throw DomainError("dynamics not finite at a Lipschitz probe");
  return y;
}

}  // namespace

LipschitzEstimates estimate_lipschitz(const Dynamics& f, const State& x, double u,
                                      const State& weights, const LipschitzProbe& probe) {
  LipschitzEstimates L;
  L.weights = weights;
  std::vector<double> sweep = {0.0};
  if (probe.w_max > 0.0) sweep = {-probe.w_max, 0.0, probe.w_max};
  const double h_w = 1e-4;
  const State f_zero = checked(f, x, u, 0.0);

  for (double d : sweep) {
    const State f0 = d == 0.0 ? f_zero : checked(f, x, u, d);
    for (double s : {-1.0, 1.0}) {
      const State du = checked(f, x, u + s * probe.h_u, d) - f0;
      L.L_u = std::max(L.L_u, weighted_norm(du, weights) / probe.h_u);
      L.sens.u = L.sens.u.cwiseMax(du.cwiseAbs() / probe.h_u);

      for (int i = 0; i < kStateDim; ++i) {
        const double h = probe.h_x * probe.probe_scale[i];
        State xp = x;
        xp[i] += s * h;
        const State dx = checked(f, xp, u, d) - f0;
        L.L_x[i] = std::max(L.L_x[i], weighted_norm(dx, weights) / h);
        L.sens.x.col(i) = L.sens.x.col(i).cwiseMax(dx.cwiseAbs() / h);
      }

      const State dw = checked(f, x, u, d + s * h_w) - f0;
      L.sens.w = L.sens.w.cwiseMax(dw.cwiseAbs() / h_w);
    }
    if (d != 0.0) {
      // secant slope from the nominal disturbance, which the remainder term multiplies by w_max
      L.sens.w = L.sens.w.cwiseMax((f0 - f_zero).cwiseAbs() / std::abs(d));
    }
  }
  return L;
}

std::vector<double> interpolation_weights(std::span<const Neighbor> nbrs, double epsilon) {
  std::vector<double> w;
  w.reserve(nbrs.size());
  double sum = 0.0;
  for (const auto& n : nbrs) {
    w.push_back(1.0 / (n.distance + epsilon));
    sum += w.back();
  }
  for (double& v : w) v /= sum;
  return w;
}

double interpolate(const TransitionDb& db, const State& /*x*/, std::span<const Neighbor> nbrs,
                   double epsilon, const InputBox& box) {
  if (nbrs.empty()) throw DomainError("interpolate needs at least one neighbour");
  if (nbrs.size() == 1) return box.clamp(db.at(nbrs[0].index).u_bar);
  const std::vector<double> w = interpolation_weights(nbrs, epsilon);
  double u = 0.0;
  for (std::size_t i = 0; i < nbrs.size(); ++i) u += w[i] * db.at(nbrs[i].index).u_bar;
  return box.clamp(u);
}

State deviation_bound(const State& x, double u, const Transition& n, const LipschitzEstimates& L,
                      double t) {
  const State dx = (x - n.x_bar).cwiseAbs();
  const double du = std::abs(u - n.u_bar);
  return (State::Ones() + t * L.L_x).cwiseProduct(dx) + State::Constant(t * L.L_u * du);
}

State coupling_remainder(const State& x, double u, const Transition& n, const Sensitivity& at_x,
                         double sample_time, double w_max) {
  const StateMatrix Sx = at_x.x.cwiseMax(n.sens.x);
  const State Su = at_x.u.cwiseMax(n.sens.u);
  const State Sw = at_x.w.cwiseMax(n.sens.w);
  const State dx = (x - n.x_bar).cwiseAbs();
  const double du = std::abs(u - n.u_bar);
  return sample_time * (Sx * dx + Su * du + Sw * w_max);
}

Certificate certify(const TransitionDb& db, const State& x, double u,
                    std::span<const Neighbor> nbrs, const LipschitzEstimates& L,
                    const CertifyContext& ctx) {
  Certificate c;
  c.safe = !nbrs.empty();
  const double t = ctx.sample_time * std::max(ctx.delay_steps, 1);
  // The Lipschitz constants are measured in the W-norm, so the bound is evaluated in the
  // coordinates z_i = x_i / c_i and mapped back to state units.
  const State& scale = db.scale();
  LipschitzEstimates Lz = L;
  Lz.L_x = L.L_x.cwiseProduct(scale);
  const State z = x.cwiseQuotient(scale);
  for (const auto& nb : nbrs) {
    const Transition& n = db.at(nb.index);
    Transition nz;
    nz.x_bar = n.x_bar.cwiseQuotient(scale);
    nz.u_bar = n.u_bar;
    State delta = deviation_bound(z, u, nz, Lz, t).cwiseProduct(scale);
    if (ctx.remainder) delta += coupling_remainder(x, u, n, L.sens, ctx.sample_time, ctx.w_max);
    for (int i = 0; i < kStateDim; ++i) {
      if (!(delta[i] <= n.margin_bar[i])) c.safe = false;
      const double ratio = n.margin_bar[i] > 0.0
                               ? delta[i] / n.margin_bar[i]
                               : (delta[i] > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
      c.max_ratio = std::max(c.max_ratio, ratio);
    }
    c.deltas.push_back(delta);
  }
  return c;
}

void FilterConfig::validate() const {
  if (k < 1) throw ConfigError("filter k must be >= 1");
  if (!(epsilon > 0.0)) throw ConfigError("filter epsilon must be > 0");
  if (!(h_u > 0.0) || !(h_x > 0.0)) throw ConfigError("Lipschitz probe sizes must be > 0");
  if (delay_steps < 1) throw ConfigError("delay_steps must be >= 1");
}

Sensitivity wing_sensitivity(const Plant& plant, const State& x, double u,
                             const LipschitzProbe& probe) {
  const Dynamics f = [&plant](const State& s, double v, double w) { return plant.deriv(s, v, w); };
  return estimate_lipschitz(f, x, u, State::Ones(), probe).sens;
}

SafetyFilter::SafetyFilter(const Plant& plant, TransitionDb db, FilterConfig cfg,
                           const InputBox& input_box, double w_max, double r_max,
                           LocalTrainer trainer)
    : plant_(plant),
      db_(std::move(db)),
      cfg_(cfg),
      input_box_(input_box),
      w_max_(w_max),
      r_max_(r_max),
      trainer_(std::move(trainer)) {
  cfg_.validate();
  probe_.h_u = cfg_.h_u;
  probe_.h_x = cfg_.h_x;
  probe_.probe_scale = db_.scale();
  probe_.w_max = w_max_;
}

FilterDecision SafetyFilter::try_certify(std::size_t k, const State& x, double lo, double hi) {
  FilterDecision d;
  d.k = k;
  const std::vector<Neighbor> nbrs = db_.query(x, cfg_.k, r_max_);
  d.n_neighbors = static_cast<int>(nbrs.size());
  if (nbrs.empty()) return d;
  d.u = std::clamp(interpolate(db_, x, nbrs, cfg_.epsilon, input_box_), lo, hi);
  const Dynamics f = [this](const State& s, double v, double w) { return plant_.deriv(s, v, w); };
  LipschitzEstimates L;
  try {
    L = estimate_lipschitz(f, x, d.u, db_.scale().array().square().inverse(), probe_);
  } catch (const DomainError&) {
    d.max_ratio = std::numeric_limits<double>::infinity();
    return d;
  }
  const CertifyContext ctx{plant_.sample_time(), cfg_.delay_steps, w_max_, cfg_.remainder};
  Certificate c = certify(db_, x, d.u, nbrs, L, ctx);
  d.certified = c.safe;
  d.max_ratio = c.max_ratio;
  for (const auto& nb : nbrs) d.x_plus.push_back(db_.at(nb.index).x_plus);
  d.deltas = std::move(c.deltas);
  return d;
}

FilterDecision SafetyFilter::step(std::size_t k, const State& x, double u_prev, double rate) {
  double lo = input_box_.lo;
  double hi = input_box_.hi;
  if (rate > 0.0) {
    lo = std::max(lo, u_prev - rate);
    hi = std::min(hi, u_prev + rate);
  }
  FilterDecision first = try_certify(k, x, lo, hi);
  if (first.certified) return first;

  bool exit = false;
  if (cfg_.local_retraining && trainer_ && !db_.empty()) {
    std::optional<Transition> t = trainer_(x, k);
    if (t) {
      t->sens = wing_sensitivity(plant_, t->x_bar, t->u_bar, probe_);
      db_.insert(std::move(*t));
      FilterDecision retry = try_certify(k, x, lo, hi);
      retry.fallback_tier = 2;
      if (retry.certified) return retry;
    } else {
      exit = true;
    }
  }

  FilterDecision hold;
  hold.k = k;
  hold.n_neighbors = first.n_neighbors;
  hold.max_ratio = first.max_ratio;
  hold.fallback_tier = 1;
  hold.envelope_exit = exit;
  hold.u = std::clamp(x[kFlap], lo, hi);
  return hold;
}

void write_filter_log_csv(std::ostream& os, std::span<const FilterDecision> log) {
  os << "k,verdict,n_neighbors,max_ratio,fallback_tier\n";
  for (const auto& d : log) {
    os << d.k << ',' << (d.certified ? "safe" : "unsafe") << ',' << d.n_neighbors << ','
       << fmt_num(d.max_ratio) << ',' << d.fallback_tier << '\n';
  }
}

}  // namespace mpcrl
