#include "focustrack/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "focustrack/errors.hpp"
#include "focustrack/rng.hpp"

namespace focustrack {

namespace {

std::vector<double> evaluate(const GraphLoss& loss, const GradientTape& params) {
    ad::Binding bind(params, false);
    std::vector<ad::Var> outs = loss(bind);
    std::vector<double> v;
    v.reserve(outs.size());
    for (const auto& o : outs) {
        if (o.value().size() != 1) throw DimensionError("grad_check: loss must be a single element");
        const double x = o.value()[0];
        if (!std::isfinite(x)) throw NumericError("grad_check: non-finite loss");
        v.push_back(x);
    }
    return v;
}

}  // namespace

GradCheckReport grad_check(const GraphLoss& loss, GradientTape& params, const GradCheckOptions& opt) {
    if (!(opt.eps >= 1e-6 && opt.eps <= 1e-2)) throw ParameterError("grad_check: eps must lie in [1e-6, 1e-2]");

    // Analytic gradients, one backward per loss term.
    const std::size_t n_terms = evaluate(loss, params).size();
    std::vector<GradientTape> analytic;
    analytic.reserve(n_terms);
    for (std::size_t t = 0; t < n_terms; ++t) {
        GradientTape g = params;
        g.zero_grad();
        ad::Binding bind(params, true, opt.filter);
        std::vector<ad::Var> outs = loss(bind);
        ad::backward(outs.at(t));
        bind.accumulate_grads(g);
        analytic.push_back(std::move(g));
    }

    // Coordinates to probe, each tagged with the terms it is compared for.
    struct Coord {
        std::string name;
        std::size_t idx;
        std::vector<std::size_t> terms;
    };
    std::vector<Coord> probes;
    std::vector<std::size_t> all_terms(n_terms);
    for (std::size_t t = 0; t < n_terms; ++t) all_terms[t] = t;
    Rng rng(opt.seed);
    for (const std::string& name : params.names()) {
        if (opt.filter && !opt.filter(name)) continue;
        const std::size_t size = params.param(name).size();
        const std::size_t k = std::min(opt.coords_per_tensor, size);
        if (opt.probe == Probe::random) {
            for (std::size_t s = 0; s < k; ++s) probes.push_back({name, rng.index(size), all_terms});
            continue;
        }
        std::map<std::size_t, std::vector<std::size_t>> picked;
        for (std::size_t t = 0; t < n_terms; ++t) {
            const Tensor& g = analytic[t].grad(name);
            std::vector<std::size_t> order(size);
            for (std::size_t i = 0; i < size; ++i) order[i] = i;
            std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                              [&g](std::size_t a, std::size_t b) {
                                  const double ga = std::abs(g[a]), gb = std::abs(g[b]);
                                  return ga != gb ? ga > gb : a < b;
                              });
            for (std::size_t s = 0; s < k; ++s)
                if (g[order[s]] != 0.0) picked[order[s]].push_back(t);
        }
        for (auto& [idx, terms] : picked) probes.push_back({name, idx, std::move(terms)});
    }

    // Central differences carry roundoff of about u * |L| / eps. A coordinate
    // whose gradient is tiny next to the loss gets a larger step (up to 1e-2)
    // so that this stays below 1e-5 of the analytic value.
    const auto base = evaluate(loss, params);
    const double u = params.dtype() == DType::f64 ? 0x1p-53 : 0x1p-24;
    auto step_for = [&](std::size_t t, double a) {
        double eps = opt.eps;
        while (eps < 1e-2 && u * std::abs(base[t]) / eps > 1e-5 * std::abs(a)) eps = std::min(1e-2, eps * 10.0);
        return eps;
    };

    GradCheckReport rep;
    rep.max_rel_err.assign(n_terms, 0.0);
    rep.worst_param.assign(n_terms, "");
    for (const Coord& pr : probes) {
        std::map<double, std::vector<std::size_t>> by_eps;
        for (std::size_t t : pr.terms) {
            const double a = analytic[t].grad(pr.name)[pr.idx];
            // Below the loss's resolution even at the largest step: nothing to compare.
            if (u * std::abs(base[t]) / 1e-2 > 0.1 * std::abs(a)) {
                ++rep.skipped;
                continue;
            }
            by_eps[step_for(t, a)].push_back(t);
        }
        Tensor& p = params.param(pr.name);
        const double orig = p[pr.idx];
        ++rep.coordinates;
        auto central = [&](double h) {
            p[pr.idx] = orig + h;
            const auto up = evaluate(loss, params);
            p[pr.idx] = orig - h;
            const auto down = evaluate(loss, params);
            p[pr.idx] = orig;
            std::vector<double> d(up.size());
            for (std::size_t t = 0; t < up.size(); ++t) d[t] = (up[t] - down[t]) / (2.0 * h);
            return d;
        };
        for (const auto& [eps, terms] : by_eps) {
            // An enlarged step is paired with its half and Richardson-combined,
            // which cancels the O(h^2) truncation term.
            std::vector<double> d = central(eps);
            if (eps > opt.eps) {
                const auto half = central(eps / 2.0);
                for (std::size_t t = 0; t < d.size(); ++t) d[t] = (4.0 * half[t] - d[t]) / 3.0;
            }
            for (std::size_t t : terms) {
                const double numeric = d[t];
                const double a = analytic[t].grad(pr.name)[pr.idx];
                const double rel = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
                if (rel > rep.max_rel_err[t]) {
                    rep.max_rel_err[t] = rel;
                    rep.worst_param[t] = pr.name + "[" + std::to_string(pr.idx) + "]";
                }
            }
        }
    }
    return rep;
}

double grad_check(const std::function<ad::Var(ad::Binding&)>& loss, GradientTape& params, double eps) {
    GradCheckOptions opt;
    opt.eps = eps;
    opt.coords_per_tensor = 16;
    const auto rep = grad_check([&](ad::Binding& b) { return std::vector<ad::Var>{loss(b)}; }, params, opt);
    return rep.max_rel_err.at(0);
}

}  // namespace focustrack
