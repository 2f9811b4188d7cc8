#include "scn/loss.hpp"

#include <cmath>
#include <map>
#include <sstream>

namespace scn {

void TripletConfig::validate() const {
  if (!(margin > 0.0)) throw ConfigError("triplet margin must be positive");
}

TripletResult triplet_loss_ba(std::span<const Var> features, std::span<const int> labels,
                              const TripletConfig& cfg) {
  cfg.validate();
  const std::size_t b = features.size();
  if (b == 0 || labels.size() != b)
    throw BatchCompositionError("triplet loss: " + std::to_string(b) + " features, " +
                                std::to_string(labels.size()) + " labels");
  std::map<int, std::size_t> counts;
  for (int l : labels) ++counts[l];
  if (counts.size() < 2)
    throw BatchCompositionError("triplet loss: batch needs at least 2 subjects");
  for (auto [label, c] : counts)
    if (c < 2)
      throw BatchCompositionError("triplet loss: subject " + std::to_string(label) +
                                  " has a single feature; each needs at least 2");
  const std::size_t dim = features[0].value().size();
  for (const Var& f : features)
    if (f.value().size() != dim)
      throw DimensionError("triplet loss: features differ in size");

  std::vector<double> d(b * b, 0.0);
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = i + 1; j < b; ++j) {
      const double* x = features[i].value().data();
      const double* y = features[j].value().data();
      double s = 0.0;
      for (std::size_t e = 0; e < dim; ++e) s += (x[e] - y[e]) * (x[e] - y[e]);
      d[i * b + j] = d[j * b + i] = std::sqrt(s);
    }

  const double sgn = cfg.sign == TripletSign::standard ? 1.0 : -1.0;
  double total = 0.0;
  std::size_t triplets = 0, active = 0;
  std::vector<double> coef(b * b, 0.0);  // d(sum of hinges) / d(distance)
  for (std::size_t a = 0; a < b; ++a)
    for (std::size_t p = 0; p < b; ++p) {
      if (p == a || labels[p] != labels[a]) continue;
      for (std::size_t n = 0; n < b; ++n) {
        if (labels[n] == labels[a]) continue;
        ++triplets;
        const double h = cfg.margin + sgn * (d[a * b + p] - d[a * b + n]);
        if (h > 0.0) {
          ++active;
          total += h;
          coef[a * b + p] += sgn;
          coef[a * b + n] -= sgn;
        }
      }
    }
  double norm = 0.0;
  if (cfg.normalization == TripletNorm::paper_2M)
    norm = 1.0 / (2.0 * cfg.margin * static_cast<double>(triplets));
  else if (active > 0)
    norm = 1.0 / static_cast<double>(active);

  TripletResult res;
  res.triplets = triplets;
  res.active = active;
  res.nonzero_fraction = static_cast<double>(active) / static_cast<double>(triplets);
  std::vector<Var> inputs(features.begin(), features.end());
  res.loss = features[0].tape->record(
      Tensor::scalar(total * norm), std::move(inputs),
      [b, dim, d = std::move(d), coef = std::move(coef), norm](Tape& tape, std::size_t self) {
        const double up = tape.grad(self)[0] * norm;
        if (up == 0.0) return;
        const auto& ids = tape.inputs(self);
        for (std::size_t i = 0; i < b; ++i)
          for (std::size_t j = 0; j < b; ++j) {
            // Both orientations of a pair feed the same distance.
            const double c = coef[i * b + j] + coef[j * b + i];
            if (j <= i || c == 0.0 || d[i * b + j] == 0.0) continue;
            const double k = up * c / d[i * b + j];
            const double* x = tape.value(ids[i]).data();
            const double* y = tape.value(ids[j]).data();
            const bool gi = tape.requires_grad(ids[i]), gj = tape.requires_grad(ids[j]);
            auto dx = gi ? tape.grad(ids[i]) : std::span<double>{};
            auto dy = gj ? tape.grad(ids[j]) : std::span<double>{};
            for (std::size_t e = 0; e < dim; ++e) {
              const double g = k * (x[e] - y[e]);
              if (gi) dx[e] += g;
              if (gj) dy[e] -= g;
            }
          }
      });
  return res;
}

double LrSchedule::at(std::uint64_t step) const {
  double lr = initial;
  for (const auto& [from, rate] : breakpoints)
    if (step >= from) lr = rate;
  return lr;
}

LrSchedule LrSchedule::preset(const std::string& name) {
  if (name == "casia_b") return {1e-3, {{10'000, 1e-4}, {80'000, 1e-5}}};
  if (name == "ou_mvlp") return {1e-3, {{50'000, 1e-4}, {200'000, 1e-5}}};
  if (name == "constant") return {1e-3, {}};
  throw ConfigError("unknown learning-rate schedule '" + name +
                    "' (expected casia_b, ou_mvlp, constant or an explicit list)");
}

LrSchedule LrSchedule::parse(const std::string& text) {
  if (text == "casia_b" || text == "ou_mvlp" || text == "constant") return preset(text);
  LrSchedule s;
  std::stringstream in(text);
  std::string item;
  bool first = true;
  try {
    while (std::getline(in, item, ',')) {
      if (first) {
        s.initial = std::stod(item);
        first = false;
        continue;
      }
      const auto colon = item.find(':');
      if (colon == std::string::npos) throw ConfigError("missing ':'");
      const auto step = std::stoull(item.substr(0, colon));
      if (!s.breakpoints.empty() && step <= s.breakpoints.back().first)
        throw ConfigError("breakpoints must increase");
      s.breakpoints.emplace_back(step, std::stod(item.substr(colon + 1)));
    }
  } catch (const std::logic_error&) {
    throw ConfigError("cannot parse learning-rate schedule '" + text + "'");
  } catch (const ConfigError& e) {
    throw ConfigError("cannot parse learning-rate schedule '" + text + "': " + e.what());
  }
  if (first) throw ConfigError("empty learning-rate schedule");
  return s;
}

std::string LrSchedule::str() const {
  std::ostringstream out;
  out << initial;
  for (const auto& [step, rate] : breakpoints) out << ',' << step << ':' << rate;
  return out.str();
}

double lr_schedule(std::uint64_t step, const std::string& dataset) {
  return LrSchedule::preset(dataset).at(step);
}

void optimizer_step(std::vector<NamedParam>& params, AdamState& st, double lr) {
  for (auto& [name, t] : params)
    for (std::size_t i = 0; i < t->size(); ++i)
      if (!std::isfinite(t->grad()[i]))
        throw NumericError("non-finite gradient in " + name + " at coordinate " +
                           std::to_string(i));
  if (st.m.empty()) {
    for (auto& [name, t] : params) {
      st.m.emplace_back(t->shape());
      st.v.emplace_back(t->shape());
    }
  }
  if (st.m.size() != params.size())
    throw ConfigError("optimizer state holds " + std::to_string(st.m.size()) +
                      " moments for " + std::to_string(params.size()) + " parameters");
  ++st.step;
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k].second;
    if (st.m[k].shape() != p.shape())
      throw ConfigError("optimizer moment shape mismatch for " + params[k].first);
    const auto g = p.grad();
    auto m = st.m[k].values();
    auto v = st.v[k].values();
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = st.beta1 * m[i] + (1.0 - st.beta1) * g[i];
      v[i] = st.beta2 * v[i] + (1.0 - st.beta2) * g[i] * g[i];
      p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + st.eps);
    }
  }
}

}  // namespace scn
