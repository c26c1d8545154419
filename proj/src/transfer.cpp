#include "merodim/transfer.hpp"

#include "merodim/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

namespace merodim {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double adaptive_simpson(const std::function<double(double)>& g, double a, double b, double fa,
                        double fm, double fb, double whole, double tol, int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = g(lm), frm = g(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const double delta = left + right - whole;
    if (depth <= 0 || std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
    return adaptive_simpson(g, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) +
           adaptive_simpson(g, m, b, fm, frm, fb, right, tol / 2.0, depth - 1);
}

double integrate(const std::function<double(double)>& g, double a, double b, double tol) {
    const double fa = g(a), fb = g(b), fm = g(0.5 * (a + b));
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return adaptive_simpson(g, a, b, fa, fm, fb, whole, tol * std::max(std::abs(whole), 1e-300), 48);
}

// J(y) = int_y^inf (v^2 + q2)^(-t) dv for y > 0, 2t > 1, as [low, high, mid].
struct IntegralTail {
    double low, high, mid;
};

IntegralTail power_integral(double y, double q2, double t) {
    const double V = std::max({8.0 * y, 64.0 * std::sqrt(q2) + 1.0, y + 16.0});
    const auto g = [&](double v) { return std::pow(v * v + q2, -t); };
    const double head = integrate(g, y, V, 1e-12);
    const double bare = std::pow(V, 1.0 - 2.0 * t) / (2.0 * t - 1.0);
    const double lo = head + bare * std::pow(1.0 + q2 / (V * V), -t);
    const double hi = head + bare;
    return {lo, hi, 0.5 * (lo + hi)};
}

}  // namespace

LatticeTail lattice_tail_one_side(double scale, double alpha, double q2, double t, int k_start) {
    LatticeTail tail;
    if (2.0 * t <= 1.0) {
        tail.divergent = true;
        tail.low = tail.high = tail.mid = kInf;
        return tail;
    }
    if (k_start + alpha <= 1.0)
        throw Error("InvalidArgument", "lattice tail start must sit past the fiber turning point");
    const double st = std::pow(scale, -t);
    const double y = k_start + alpha;
    const IntegralTail J = power_integral(y, q2, t);
    const auto phi = [&](double k) { return st * std::pow((k + alpha) * (k + alpha) + q2, -t); };
    const double phi0 = phi(k_start);
    tail.low = st * J.low;
    tail.high = st * J.high + phi0;
    // Euler-Maclaurin midpoint: integral + phi/2 - phi'/12.
    const double dphi = -2.0 * t * y / (y * y + q2) * phi0;
    tail.mid = std::clamp(st * J.mid + 0.5 * phi0 - dphi / 12.0, tail.low, tail.high);
    return tail;
}

LatticeTail fiber_weight_tail(const PreimageLattice& lat, double t, int k_pos, int k_neg) {
    const double scale = lat.deriv_prefactor * lat.period * lat.period;
    const LatticeTail pos = lattice_tail_one_side(scale, lat.alpha, lat.q2, t, k_pos);
    const LatticeTail neg = lattice_tail_one_side(scale, -lat.alpha, lat.q2, t, k_neg);
    LatticeTail out;
    out.divergent = pos.divergent || neg.divergent;
    if (out.divergent) {
        out.low = out.high = out.mid = kInf;
        return out;
    }
    out.low = pos.low + neg.low;
    out.high = pos.high + neg.high;
    out.mid = pos.mid + neg.mid;
    return out;
}

namespace {

OperatorEval eval_fiber_sum(const MapSpec& f, double t, const SpherePoint& w,
                            const TruncationPolicy& policy, double asym_tol, bool bare) {
    OperatorEval ev;
    ev.t = t;
    ev.w = w;
    TruncationPolicy pol = policy;
    pol.asym_tol = asym_tol;
    const PreimageSet ps = f.preimages(w, pol);
    const double d_pref = bare ? 1.0 : ps.lattice.deriv_prefactor;

    // Branches arrive sorted by ascending |z|, hence descending weight.
    CompensatedSum acc;
    for (const auto& br : ps.branches) {
        const double sph = bare ? br.sph_deriv / ps.lattice.deriv_prefactor : br.sph_deriv;
        acc.add(std::pow(sph, -t));
    }
    ev.partial = acc.value();
    ev.branches_used = static_cast<int>(ps.branches.size());

    PreimageLattice lat = ps.lattice;
    lat.deriv_prefactor = d_pref;
    const LatticeTail tail = fiber_weight_tail(lat, t, ps.k_enum_pos + 1, ps.k_enum_neg + 1);
    ev.tail_low = tail.low;
    ev.tail_high = tail.high;
    ev.tail_mid = tail.mid;
    ev.tail_divergent = tail.divergent;
    return ev;
}

}  // namespace

OperatorEval transfer_one(const MapSpec& f, double t, const SpherePoint& w,
                          const TruncationPolicy& policy, bool strict_asym) {
    const double rho = f.order();
    const double threshold = rho / (rho + 1.0) + kBorelMargin;
    if (t < threshold - 1e-9)
        throw Error("BelowBorelThreshold",
                    "t = " + std::to_string(t) + " is at or below rho/(rho+1) + margin");
    return eval_fiber_sum(f, t, w, policy, strict_asym ? policy.asym_tol : 0.0, false);
}

OperatorEval bare_bound_sum(const MapSpec& f, double t, const SpherePoint& w,
                            const TruncationPolicy& policy) {
    const double rho = f.order();
    const double threshold = rho / (rho + 1.0) + kBorelMargin;
    if (t < threshold - 1e-9)
        throw Error("BelowBorelThreshold",
                    "t = " + std::to_string(t) + " is at or below rho/(rho+1) + margin");
    try {
        return eval_fiber_sum(f, t, w, policy, 0.0, true);
    } catch (const Error& e) {
        if (e.code() == "BranchPointConflict" || e.code() == "AsymptoticValue") {
            // Exact asymptotic value: empty fiber, the bare sum is zero.
            OperatorEval ev;
            ev.t = t;
            ev.w = w;
            return ev;
        }
        throw;
    }
}

ScanReport uniform_bound_scan(const MapSpec& f, double t, std::span<const SpherePoint> grid,
                              const TruncationPolicy& policy) {
    ScanReport rep;
    rep.values.resize(grid.size(), 0.0);
    std::vector<char> ok(grid.size(), 0);
    parallel_for(grid.size(), 1, [&](std::size_t i) {
        const OperatorEval ev = bare_bound_sum(f, t, grid[i], policy);
        rep.values[i] = ev.partial + ev.tail_high;
        ok[i] = 1;
    });
    if (rep.values.empty()) throw Error("InvalidArgument", "empty scan grid");
    rep.sup = -kInf;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (rep.values[i] > rep.sup) {
            rep.sup = rep.values[i];
            rep.argmax = grid[i];
        }
    }
    std::vector<double> sorted = rep.values;
    std::sort(sorted.begin(), sorted.end());
    rep.median = sorted[sorted.size() / 2];
    rep.flagged_unbounded = rep.sup > 10.0 * rep.median;
    return rep;
}

std::vector<SpherePoint> sphere_grid(int n) {
    std::vector<SpherePoint> pts;
    pts.reserve(static_cast<std::size_t>(n));
    const double ga = std::numbers::pi * (3.0 - std::sqrt(5.0));
    for (int i = 0; i < n; ++i) {
        const double z = 1.0 - 2.0 * (i + 0.5) / n;
        const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
        const double th = ga * i;
        const double X = r * std::cos(th), Y = r * std::sin(th);
        if (1.0 - z < 1e-12) {
            pts.push_back(SpherePoint::infinity());
        } else {
            pts.push_back(SpherePoint(Complex(X, Y) / (1.0 - z)));
        }
    }
    return pts;
}

// ---------------------------------------------------------------------------
// Backward-orbit tree
// ---------------------------------------------------------------------------

namespace {

struct Node {
    SpherePoint z;
    double lw = 0.0;
    std::uint32_t order = 0;
};

struct ChildBatch {
    std::vector<Node> nodes;
    std::vector<std::vector<std::int16_t>> paths;  // only in collect mode
    std::vector<double> lump_lws;                  // log weights of infinity-lumps
};

}  // namespace

TreeResult backward_orbit_tree(const MapSpec& f, double t, const SpherePoint& root,
                               const TruncationPolicy& policy, const BeamParams& beam,
                               const TreeOptions& opt) {
    if (opt.depth < 1) throw Error("InvalidArgument", "tree depth must be >= 1");
    if (2.0 * t <= 1.0) throw Error("BelowBorelThreshold", "tree weights diverge at or below the Borel threshold");
    const int H = beam.branch_halfwidth;

    TreeResult res;
    std::vector<Node> nodes{Node{root, 0.0, 0}};
    std::vector<std::vector<std::int16_t>> paths;
    if (opt.collect_atoms) paths.push_back({});

    // One-level variation at the lump boundary: how much the operator value
    // at the first omitted branch differs from its value at infinity. Used
    // to convert lumped mass into an error estimate.
    if (!opt.collect_atoms) {
        try {
            TruncationPolicy probe = policy;
            probe.k_max = 256;
            const PreimageLattice lat0 = f.preimage_lattice(root, 0.0);
            const Complex zb = lat0.base + static_cast<double>(H + 1) * lat0.step;
            const double g_b = eval_fiber_sum(f, t, SpherePoint(zb), probe, 0.0, false).value();
            const double g_inf = eval_fiber_sum(f, t, SpherePoint::infinity(), probe, 0.0, false).value();
            if (g_inf > 0.0) res.lump_error_rate = std::abs(g_b / g_inf - 1.0);
        } catch (const Error&) {
            res.lump_error_rate = 0.05;  // conservative default when the probe is unavailable
        }
    }

    for (int level = 1; level <= opt.depth; ++level) {
        const std::size_t parent_count = nodes.size();
        const unsigned workers = std::max(1u, beam.workers);
        const std::size_t chunk = std::max<std::size_t>(1, (parent_count + workers * 4 - 1) / (workers * 4));
        const std::size_t n_chunks = (parent_count + chunk - 1) / chunk;
        std::vector<ChildBatch> batches(n_chunks);
        std::vector<double> skipped_lw(n_chunks, -kInf);  // nodes whose fiber enumeration failed

        parallel_for(n_chunks, workers, [&](std::size_t ci) {
            ChildBatch& batch = batches[ci];
            std::vector<double> skipped;
            const std::size_t lo = ci * chunk;
            const std::size_t hi = std::min(parent_count, lo + chunk);
            batch.nodes.reserve((hi - lo) * (2 * static_cast<std::size_t>(H) + 2));
            for (std::size_t pi = lo; pi < hi; ++pi) {
                const Node& parent = nodes[pi];
                PreimageLattice lat;
                try {
                    lat = f.preimage_lattice(parent.z, 0.0);
                } catch (const Error&) {
                    skipped.push_back(parent.lw);
                    continue;
                }
                const double log_scale = std::log(lat.deriv_prefactor) + 2.0 * std::log(lat.period);
                for (int k = -H; k <= H; ++k) {
                    const double m2 = (k + lat.alpha) * (k + lat.alpha) + lat.q2;
                    Node child;
                    child.z = SpherePoint(lat.base + static_cast<double>(k) * lat.step);
                    child.lw = parent.lw - t * (log_scale + std::log(m2));
                    batch.nodes.push_back(child);
                    if (opt.collect_atoms) {
                        auto p = paths[pi];
                        p.push_back(static_cast<std::int16_t>(k));
                        batch.paths.push_back(std::move(p));
                    }
                }
                const LatticeTail tail = fiber_weight_tail(lat, t, H + 1, H + 1);
                if (tail.mid > 0.0 && std::isfinite(tail.mid)) {
                    const double lw_lump = parent.lw + std::log(tail.mid);
                    batch.lump_lws.push_back(lw_lump);
                    if (!opt.collect_atoms) {
                        Node lump;
                        lump.z = SpherePoint::infinity();
                        lump.lw = lw_lump;
                        batch.nodes.push_back(lump);
                    }
                }
            }
            skipped_lw[ci] = skipped.empty() ? -kInf : log_sum_exp(std::move(skipped));
        });

        // Deterministic concatenation in chunk order.
        std::vector<Node> children;
        std::vector<std::vector<std::int16_t>> child_paths;
        std::size_t total = 0;
        for (const auto& b : batches) total += b.nodes.size();
        children.reserve(total);
        if (opt.collect_atoms) child_paths.reserve(total);
        std::vector<double> lump_lws;
        for (auto& b : batches) {
            for (auto& nd : b.nodes) {
                nd.order = static_cast<std::uint32_t>(children.size());
                children.push_back(nd);
            }
            for (auto& p : b.paths) child_paths.push_back(std::move(p));
            for (double lv : b.lump_lws) lump_lws.push_back(lv);
        }
        if (children.empty()) throw Error("EmptyTruncation", "tree level lost every branch");

        std::vector<double> lws(children.size());
        for (std::size_t i = 0; i < children.size(); ++i) lws[i] = children[i].lw;
        double level_log_sum = log_sum_exp(lws);
        if (opt.collect_atoms && !lump_lws.empty()) {
            // Lumps carry real level mass even when they are not expanded.
            std::vector<double> all = lws;
            all.insert(all.end(), lump_lws.begin(), lump_lws.end());
            level_log_sum = log_sum_exp(std::move(all));
        }

        TreeLevel lvl;
        lvl.log_sum = level_log_sum;
        {
            CompensatedSum ls;
            for (double lv : lump_lws) ls.add(std::exp(lv - level_log_sum));
            lvl.lump_share = ls.value();
        }

        // Prune below rel_tol of the level total, then trim to the beam.
        const double cutoff = std::log(beam.rel_tol) + level_log_sum;
        CompensatedSum dropped;
        std::vector<std::size_t> keep;
        keep.reserve(children.size());
        for (std::size_t i = 0; i < children.size(); ++i) {
            if (children[i].lw < cutoff) {
                dropped.add(std::exp(children[i].lw - level_log_sum));
            } else {
                keep.push_back(i);
            }
        }
        if (keep.size() > static_cast<std::size_t>(beam.beam_width)) {
            std::sort(keep.begin(), keep.end(), [&](std::size_t a, std::size_t b) {
                if (children[a].lw != children[b].lw) return children[a].lw > children[b].lw;
                return children[a].order < children[b].order;
            });
            for (std::size_t j = beam.beam_width; j < keep.size(); ++j)
                dropped.add(std::exp(children[keep[j]].lw - level_log_sum));
            keep.resize(static_cast<std::size_t>(beam.beam_width));
            std::sort(keep.begin(), keep.end());
        }
        for (std::size_t ci = 0; ci < n_chunks; ++ci) {
            if (skipped_lw[ci] > -kInf) dropped.add(std::exp(skipped_lw[ci] - level_log_sum));
        }
        lvl.discarded_share = dropped.value() + (opt.collect_atoms ? lvl.lump_share : 0.0);
        lvl.node_count = keep.size();
        res.levels.push_back(lvl);
        res.total_discard_share += lvl.discarded_share;
        res.total_lump_share += lvl.lump_share;

        std::vector<Node> next;
        next.reserve(keep.size());
        std::vector<std::vector<std::int16_t>> next_paths;
        if (opt.collect_atoms) next_paths.reserve(keep.size());
        for (std::size_t idx : keep) {
            next.push_back(children[idx]);
            if (opt.collect_atoms) next_paths.push_back(std::move(child_paths[idx]));
        }
        nodes = std::move(next);
        if (opt.collect_atoms) {
            paths = std::move(next_paths);
            for (std::size_t i = 0; i < nodes.size(); ++i) {
                if (nodes[i].z.is_infinity()) continue;
                TreeAtomRec rec;
                rec.z = nodes[i].z.value();
                rec.log_weight = nodes[i].lw;
                rec.depth = level;
                rec.path = paths[i];
                res.atoms.push_back(std::move(rec));
            }
        }
    }
    return res;
}

// ---------------------------------------------------------------------------
// Pressure
// ---------------------------------------------------------------------------

PressureEstimate pressure_estimate(const MapSpec& f, double t, const SpherePoint& base, int depth,
                                   const TruncationPolicy& policy, const BeamParams& beam) {
    if (depth < 3) throw Error("InvalidArgument", "pressure extrapolation needs depth >= 3");
    const double rho = f.order();
    if (t < rho / (rho + 1.0) + kBorelMargin - 1e-9)
        throw Error("BelowBorelThreshold", "t at or below rho/(rho+1) + margin");

    TreeOptions opt;
    opt.depth = depth;
    const TreeResult tree = backward_orbit_tree(f, t, base, policy, beam, opt);

    PressureEstimate est;
    est.t = t;
    est.base = base;
    est.depth = depth;
    for (int n = 1; n <= depth; ++n) {
        const double ls = tree.levels[static_cast<std::size_t>(n - 1)].log_sum;
        est.per_depth.push_back(ls / n);
        const double prev = n >= 2 ? tree.levels[static_cast<std::size_t>(n - 2)].log_sum : 0.0;
        est.increments.push_back(ls - prev);
    }
    est.discard_share = tree.total_discard_share;
    est.lump_uncertainty = tree.total_lump_share * tree.lump_error_rate;
    if (est.discard_share > 0.10)
        throw Error("PruningOverflow", "discarded-mass bound above 10% of the total");

    // The increments d_n = log(S_n/S_{n-1}) converge geometrically to P, so
    // the delta-squared step applies to them rather than to P_n directly.
    const auto& d = est.increments;
    const std::size_t n = d.size();
    double ext = d.back();
    const double denom = d[n - 1] - 2.0 * d[n - 2] + d[n - 3];
    if (std::abs(denom) > 1e-12) {
        const double cand = d[n - 1] - (d[n - 1] - d[n - 2]) * (d[n - 1] - d[n - 2]) / denom;
        const double lo = std::min({d[n - 1], d[n - 2], d[n - 3]});
        const double hi = std::max({d[n - 1], d[n - 2], d[n - 3]});
        const double span = hi - lo;
        ext = std::clamp(cand, lo - span, hi + span);
    }
    est.extrapolated = ext;
    est.error_bar = std::max(std::abs(ext - d[n - 1]), 0.5 * std::abs(d[n - 1] - d[n - 2])) +
                    est.discard_share + est.lump_uncertainty;
    return est;
}

SpherePoint default_base_point(const MapSpec& f, const RegimeReport& regime) {
    static const Complex candidates[] = {Complex(0.65, 0.45),  Complex(1.3, 0.25), Complex(-0.7, 0.55),
                                         Complex(0.45, -0.85), Complex(2.3, 0.6),  Complex(1.1, -0.4)};
    std::vector<Complex> obstacles = regime.postsingular_prefix;
    for (const Complex& a : f.asymptotic_values()) obstacles.push_back(a);
    for (int k = -3; k <= 3; ++k) obstacles.push_back(f.pole(k));

    double best = -1.0;
    Complex pick = candidates[0];
    for (const Complex& c : candidates) {
        double dmin = 1.0;
        for (const Complex& o : obstacles)
            dmin = std::min(dmin, chordal_dist(SpherePoint(c), SpherePoint(o)));
        if (dmin > best) {
            best = dmin;
            pick = c;
        }
    }
    return SpherePoint(pick);
}

PressureCurve pressure_curve(const MapSpec& f, std::span<const double> t_grid, const SpherePoint& base,
                             int depth, const TruncationPolicy& policy, const BeamParams& beam) {
    PressureCurve curve;
    curve.t_grid.assign(t_grid.begin(), t_grid.end());
    for (double t : t_grid) curve.estimates.push_back(pressure_estimate(f, t, base, depth, policy, beam));
    return curve;
}

// ---------------------------------------------------------------------------
// Distortion probe
// ---------------------------------------------------------------------------

DistortionResult distortion_probe(const MapSpec& f, const RegimeReport& regime, const SpherePoint& w,
                                  double delta, int depth, int samples, std::uint64_t seed) {
    for (const Complex& p : regime.postsingular_prefix) {
        if (chordal_dist(w, SpherePoint(p)) <= 2.0 * delta)
            throw Error("BadProbeRegion", "D(w, 2 delta) meets the postsingular prefix");
    }
    DistortionResult out;
    out.samples_used = samples;
    if (depth == 0 || samples <= 0) return out;  // empty composition: K = 1

    const double span = delta * (1.0 + std::norm(w.is_infinity() ? Complex(0.0) : w.value()));
    if (w.is_infinity()) throw Error("BadProbeRegion", "probe disk must be finite");
    const Complex wc = w.value();

    double worst = 1.0;
    int losses = 0;
    for (int s = 0; s < samples; ++s) {
        std::mt19937_64 gen(task_seed(seed, static_cast<std::uint64_t>(s)));
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        std::uniform_int_distribution<int> kpick(-4, 4);
        std::uniform_int_distribution<int> dpick(1, depth);

        const auto sample_disk = [&]() {
            for (int tries = 0; tries < 64; ++tries) {
                const double ang = 2.0 * std::numbers::pi * unif(gen);
                const double rad = span * std::sqrt(unif(gen));
                const Complex cand = wc + std::polar(rad, ang);
                if (chordal_dist(w, SpherePoint(cand)) <= delta) return cand;
            }
            return wc;
        };

        Complex x = sample_disk();
        Complex y = sample_disk();
        const int n = dpick(gen);
        double log_dx = 0.0, log_dy = 0.0;
        bool lost = false;
        for (int j = 0; j < n && !lost; ++j) {
            const int k = kpick(gen);
            Complex zx, zy;
            try {
                const PreimageLattice lx = f.preimage_lattice(SpherePoint(x), 0.0);
                const PreimageLattice ly = f.preimage_lattice(SpherePoint(y), 0.0);
                zx = lx.base + static_cast<double>(k) * lx.step;
                zy = ly.base + static_cast<double>(k) * ly.step;
            } catch (const Error&) {
                lost = true;
                break;
            }
            // Newton polish on f(z) = target.
            for (int it = 0; it < 2; ++it) {
                try {
                    zx -= (f.eval(SpherePoint(zx)).value() - x) / f.derivative(zx);
                    zy -= (f.eval(SpherePoint(zy)).value() - y) / f.derivative(zy);
                } catch (const Error&) {
                    lost = true;
                    break;
                }
            }
            if (lost || std::abs(zx - zy) > 0.5 * std::numbers::pi) {
                lost = true;
                break;
            }
            log_dx -= std::log(f.spherical_derivative(SpherePoint(zx)));
            log_dy -= std::log(f.spherical_derivative(SpherePoint(zy)));
            x = zx;
            y = zy;
        }
        if (lost) {
            ++losses;
            continue;
        }
        worst = std::max(worst, std::exp(std::abs(log_dy - log_dx)));
    }
    out.empirical_K = worst;
    out.branch_losses = losses;
    if (losses * 5 > samples) throw Error("BranchLost", "Newton refinement lost too many inverse branches");
    return out;
}

}  // namespace merodim
