/*
 * pcle-toolkit
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "pcle/iqa.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>

#include "pcle/parallel.hpp"

namespace pcle {

void SsimParams::validate() const {
    if (window < 3 || window % 2 == 0) throw InvalidArgument("ssim window must be odd and >= 3");
    if (!(sigma > 0.0)) throw InvalidArgument("ssim sigma must be positive");
    if (!(k1 > 0.0) || !(k2 > 0.0)) throw InvalidArgument("ssim k1 and k2 must be positive");
    if (!(dynamic_range > 0.0)) throw InvalidArgument("ssim dynamic range must be positive");
}

namespace {

Eigen::ArrayXd gaussian_window(int size, double sigma) {
    Eigen::ArrayXd g(size);
    const double c = (size - 1) / 2.0;
    for (int i = 0; i < size; ++i) g(i) = std::exp(-(i - c) * (i - c) / (2.0 * sigma * sigma));
    return g / g.sum();
}

// 'Valid' separable correlation.
Grid<double> filter_valid(const Grid<double>& in, const Eigen::ArrayXd& g) {
    const Index k = g.size();
    const Index oh = in.rows() - k + 1, ow = in.cols() - k + 1;
    Grid<double> tmp = Grid<double>::Zero(in.rows(), ow);
    for (Index y = 0; y < in.rows(); ++y)
        for (Index x = 0; x < ow; ++x) {
            double s = 0.0;
            for (Index i = 0; i < k; ++i) s += g(i) * in(y, x + i);
            tmp(y, x) = s;
        }
    Grid<double> out = Grid<double>::Zero(oh, ow);
    for (Index y = 0; y < oh; ++y)
        for (Index x = 0; x < ow; ++x) {
            double s = 0.0;
            for (Index i = 0; i < k; ++i) s += g(i) * tmp(y + i, x);
            out(y, x) = s;
        }
    return out;
}

// Windows (by top-left corner) that contain only valid pixels.
Mask valid_windows(const Mask& valid, Index k) {
    const Index h = valid.rows(), w = valid.cols();
    Grid<Index> integral = Grid<Index>::Zero(h + 1, w + 1);
    for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x)
            integral(y + 1, x + 1) = (valid(y, x) ? 0 : 1) + integral(y, x + 1) + integral(y + 1, x) - integral(y, x);
    Mask out(h - k + 1, w - k + 1);
    for (Index y = 0; y + k <= h; ++y)
        for (Index x = 0; x + k <= w; ++x)
            out(y, x) = integral(y + k, x + k) - integral(y, x + k) - integral(y + k, x) + integral(y, x) == 0;
    return out;
}

Mask shared_fov(const Image& a, const Image& b) { return a.valid_mask() && b.valid_mask(); }

} // namespace

double ssim(const Image& a, const Image& b, const SsimParams& params) {
    params.validate();
    if (!a.same_shape(b)) throw InvalidArgument("ssim: image sizes differ");
    const Index k = params.window;
    if (a.width() < k || a.height() < k)
        throw InvalidArgument("ssim: image " + std::to_string(a.width()) + "x" + std::to_string(a.height()) +
                              " is smaller than the " + std::to_string(k) + "-pixel window");
    const Mask windows = valid_windows(shared_fov(a, b), k);
    const Index n = windows.count();
    if (n == 0) throw InvalidArgument("ssim: no window lies entirely inside the FoV");

    const Eigen::ArrayXd g = gaussian_window(params.window, params.sigma);
    const Grid<double>& x = a.data();
    const Grid<double>& y = b.data();
    const Grid<double> mx = filter_valid(x, g);
    const Grid<double> my = filter_valid(y, g);
    const Grid<double> exx = filter_valid(x * x, g);
    const Grid<double> eyy = filter_valid(y * y, g);
    const Grid<double> exy = filter_valid(x * y, g);

    const double c1 = std::pow(params.k1 * params.dynamic_range, 2);
    const double c2 = std::pow(params.k2 * params.dynamic_range, 2);
    double sum = 0.0;
    for (Index r = 0; r < windows.rows(); ++r)
        for (Index c = 0; c < windows.cols(); ++c) {
            if (!windows(r, c)) continue;
            const double ux = mx(r, c), uy = my(r, c);
            const double vx = exx(r, c) - ux * ux;
            const double vy = eyy(r, c) - uy * uy;
            const double cxy = exy(r, c) - ux * uy;
            sum += ((2.0 * ux * uy + c1) * (2.0 * cxy + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
        }
    return sum / double(n);
}

std::vector<double> GcfParams::default_weights(std::size_t levels) {
    std::vector<double> w(levels);
    for (std::size_t i = 1; i <= levels; ++i) {
        const double t = double(i) / 9.0;
        w[i - 1] = (-0.406385 * t + 0.334573) * t + 0.0877526;
    }
    return w;
}

void GcfParams::validate() const {
    if (factors.empty()) throw InvalidArgument("gcf needs at least one level");
    if (weights.size() != factors.size())
        throw InvalidArgument("gcf: " + std::to_string(weights.size()) + " weights for " +
                              std::to_string(factors.size()) + " levels");
    for (int f : factors)
        if (f < 1) throw InvalidArgument("gcf superpixel factors must be >= 1");
    for (double w : weights)
        if (!std::isfinite(w)) throw InvalidArgument("gcf weights must be finite");
    if (!(gamma > 0.0)) throw InvalidArgument("gcf gamma must be positive");
}

GcfResult gcf_detail(const Image& img, const GcfParams& params) {
    params.validate();
    if (img.empty()) throw InvalidArgument("gcf: empty image");
    if (img.valid_count() == 0) throw InvalidArgument("gcf: no FoV pixels");

    const Index w = img.width(), h = img.height();
    Grid<double> linear(h, w);
    for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x) linear(y, x) = std::pow(std::max(img(x, y), 0.0), params.gamma);

    GcfResult result;
    for (std::size_t level = 0; level < params.levels(); ++level) {
        const Index r = params.factors[level];
        const Index gw = (w + r - 1) / r, gh = (h + r - 1) / r;
        Grid<double> lum = Grid<double>::Zero(gh, gw);
        Mask valid = Mask::Constant(gh, gw, false);
        for (Index sy = 0; sy < gh; ++sy)
            for (Index sx = 0; sx < gw; ++sx) {
                double s = 0.0, lo = INFINITY, hi = -INFINITY;
                Index n = 0;
                for (Index y = sy * r; y < std::min(h, (sy + 1) * r); ++y)
                    for (Index x = sx * r; x < std::min(w, (sx + 1) * r); ++x)
                        if (img.in_fov(x, y)) {
                            s += linear(y, x);
                            lo = std::min(lo, linear(y, x));
                            hi = std::max(hi, linear(y, x));
                            ++n;
                        }
                if (n == 0) continue;
                valid(sy, sx) = true;
                // A uniform block averages to its value exactly.
                lum(sy, sx) = 100.0 * std::sqrt(lo == hi ? lo : s / double(n));
            }

        double total = 0.0;
        Index counted = 0;
        static constexpr int dx[4] = {-1, 1, 0, 0};
        static constexpr int dy[4] = {0, 0, -1, 1};
        for (Index sy = 0; sy < gh; ++sy)
            for (Index sx = 0; sx < gw; ++sx) {
                if (!valid(sy, sx)) continue;
                double diff = 0.0;
                int nb = 0;
                for (int k = 0; k < 4; ++k) {
                    const Index nx = sx + dx[k], ny = sy + dy[k];
                    if (nx < 0 || ny < 0 || nx >= gw || ny >= gh || !valid(ny, nx)) continue;
                    diff += std::abs(lum(sy, sx) - lum(ny, nx));
                    ++nb;
                }
                if (nb == 0) continue;
                total += diff / nb;
                ++counted;
            }
        if (counted == 0) {
            ++result.truncated;
            continue;
        }
        const double c = total / double(counted);
        result.level_contrast.push_back(c);
        result.value += params.weights[level] * c;
    }
    return result;
}

double gcf(const Image& img, const GcfParams& params) { return gcf_detail(img, params).value; }

double delta_gcf(const Image& a, const Image& b, const GcfParams& params) { return gcf(a, params) - gcf(b, params); }

std::vector<double> tot_cs(const std::vector<MethodFactors>& rows) {
    if (rows.size() < 2) throw InvalidArgument("tot_cs needs at least 2 methods");
    auto normalized = [&](auto field) {
        double lo = INFINITY, hi = -INFINITY;
        for (const auto& r : rows) {
            lo = std::min(lo, field(r));
            hi = std::max(hi, field(r));
        }
        std::vector<double> out(rows.size(), 0.5);
        if (hi > lo)
            for (std::size_t i = 0; i < rows.size(); ++i) out[i] = (field(rows[i]) - lo) / (hi - lo);
        return out;
    };
    const auto s = normalized([](const MethodFactors& r) { return r.ssim_vs_hr; });
    const auto g = normalized([](const MethodFactors& r) { return r.dgcf_vs_lr; });
    std::vector<double> out(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) out[i] = 0.5 * (s[i] + g[i]);
    return out;
}

double ssim_l1_score(const Image& a, const Image& b, double alpha, const SsimParams& params) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidArgument("ssim_l1_score: alpha must lie in [0, 1]");
    if (!a.same_shape(b)) throw InvalidArgument("ssim_l1_score: image sizes differ");
    const Mask fov = shared_fov(a, b);
    double l1 = 0.0;
    Index n = 0;
    for (Index y = 0; y < a.height(); ++y)
        for (Index x = 0; x < a.width(); ++x)
            if (fov(y, x)) {
                l1 += std::abs(a(x, y) - b(x, y));
                ++n;
            }
    if (n == 0) throw InvalidArgument("ssim_l1_score: no shared FoV pixels");
    l1 /= double(n);
    if (alpha == 0.0) return l1;
    return alpha * (1.0 - ssim(a, b, params)) + (1.0 - alpha) * l1;
}

MeanStd mean_std(const std::vector<double>& values) {
    if (values.empty()) return {};
    double m = 0.0;
    for (double v : values) m += v;
    m /= double(values.size());
    double ss = 0.0;
    for (double v : values) ss += (v - m) * (v - m);
    return {m, std::sqrt(ss / double(values.size()))};
}

std::vector<MethodScores> aggregate_rows(const std::vector<MetricRow>& rows) {
    std::map<std::string, std::vector<const MetricRow*>> by_method;
    for (const auto& r : rows) by_method[r.method].push_back(&r);
    std::vector<MethodScores> out;
    std::vector<MethodFactors> factors;
    for (auto& [method, list] : by_method) {
        std::sort(list.begin(), list.end(), [](auto* a, auto* b) { return a->image_id < b->image_id; });
        std::vector<double> s, dh, dl;
        for (const auto* r : list) {
            s.push_back(r->ssim_vs_hr);
            dh.push_back(r->gcf - r->gcf_hr);
            dl.push_back(r->gcf - r->gcf_lr);
        }
        MethodScores ms{method, mean_std(s), mean_std(dh), mean_std(dl), 0.0};
        factors.push_back({method, ms.ssim_vs_hr.mean, ms.dgcf_vs_lr.mean});
        out.push_back(ms);
    }
    if (out.size() >= 2) {
        const auto t = tot_cs(factors);
        for (std::size_t i = 0; i < out.size(); ++i) out[i].tot_cs = t[i];
    } else if (out.size() == 1) {
        out[0].tot_cs = 0.5;
    }
    return out;
}

MetricsReport evaluate(const std::map<std::string, ImageSet>& methods, const ImageSet& lr, const ImageSet& hr,
                       const SsimParams& ssim_params, const GcfParams& gcf_params, int threads) {
    ssim_params.validate();
    gcf_params.validate();
    if (hr.empty()) throw InvalidArgument("evaluate: empty HR collection");
    if (methods.count(kLrMethod)) throw InvalidArgument("evaluate: method label '" + kLrMethod + "' is reserved");

    auto check_ids = [&](const std::string& what, const ImageSet& set) {
        std::vector<std::string> missing, extra;
        for (const auto& [id, img] : hr)
            if (!set.count(id)) missing.push_back(id);
        for (const auto& [id, img] : set)
            if (!hr.count(id)) extra.push_back(id);
        if (missing.empty() && extra.empty()) return;
        std::string msg = "evaluate: " + what + " does not match the HR ids;";
        auto list = [&](const char* label, const std::vector<std::string>& ids) {
            if (ids.empty()) return;
            msg += std::string(" ") + label + ":";
            for (const auto& id : ids) msg += " " + id;
        };
        list("missing", missing);
        list("unexpected", extra);
        throw InvalidArgument(msg);
    };
    check_ids("LR set", lr);
    for (const auto& [name, set] : methods) check_ids("method '" + name + "'", set);

    std::vector<std::string> ids;
    for (const auto& [id, img] : hr) ids.push_back(id);
    std::map<std::string, const ImageSet*> all = {{kLrMethod, &lr}};
    for (const auto& [name, set] : methods) all[name] = &set;

    // One slot per (id, method) so results do not depend on scheduling.
    std::vector<std::vector<MetricRow>> per_id(ids.size());
    parallel_for(ids.size(), threads, [&](std::size_t i) {
        const std::string& id = ids[i];
        const Image& h = hr.at(id);
        const double g_hr = gcf(h, gcf_params);
        const double g_lr = gcf(lr.at(id), gcf_params);
        for (const auto& [name, set] : all) {
            const Image& sr = set->at(id);
            if (!sr.same_shape(h)) throw InvalidArgument("evaluate: '" + id + "' of method '" + name + "' differs in size from HR");
            const double g_sr = name == kLrMethod ? g_lr : gcf(sr, gcf_params);
            per_id[i].push_back({id, name, ssim(sr, h, ssim_params), g_sr, g_lr, g_hr});
        }
    });

    MetricsReport report;
    report.ssim_params = ssim_params;
    report.gcf_params = gcf_params;
    for (const auto& [name, set] : all)
        for (const auto& rows : per_id)
            for (const auto& r : rows)
                if (r.method == name) report.rows.push_back(r);
    report.methods = aggregate_rows(report.rows);
    return report;
}

void write_metrics_report(const MetricsReport& report, const std::filesystem::path& rows_csv,
                          const std::filesystem::path& summary_csv) {
    nlohmann::json header;
    header["ssim"] = {{"window", report.ssim_params.window}, {"sigma", report.ssim_params.sigma},
                      {"k1", report.ssim_params.k1}, {"k2", report.ssim_params.k2},
                      {"dynamic_range", report.ssim_params.dynamic_range}};
    header["gcf"] = {{"factors", report.gcf_params.factors}, {"gamma", report.gcf_params.gamma},
                     {"weights", report.gcf_params.weights}};
    std::vector<std::string> population;
    for (const auto& m : report.methods) population.push_back(m.method);
    header["tot_cs_population"] = population;
    header["std"] = "population";
    const std::string head = "# " + header.dump() + "\n";

    char buf[512];
    {
        std::ofstream out(rows_csv);
        if (!out) throw IoError("cannot write " + rows_csv.string());
        out << head << "image_id,method,ssim_vs_hr,gcf,gcf_lr,gcf_hr\n";
        for (const auto& r : report.rows) {
            std::snprintf(buf, sizeof buf, ",%.17g,%.17g,%.17g,%.17g\n", r.ssim_vs_hr, r.gcf, r.gcf_lr, r.gcf_hr);
            out << r.image_id << ',' << r.method << buf;
        }
        if (!out) throw IoError("failed writing " + rows_csv.string());
    }
    {
        std::ofstream out(summary_csv);
        if (!out) throw IoError("cannot write " + summary_csv.string());
        out << head
            << "method,ssim_vs_hr_mean,ssim_vs_hr_std,dgcf_vs_hr_mean,dgcf_vs_hr_std,dgcf_vs_lr_mean,dgcf_vs_lr_std,"
               "tot_cs\n";
        for (const auto& m : report.methods) {
            std::snprintf(buf, sizeof buf, ",%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", m.ssim_vs_hr.mean,
                          m.ssim_vs_hr.std, m.dgcf_vs_hr.mean, m.dgcf_vs_hr.std, m.dgcf_vs_lr.mean, m.dgcf_vs_lr.std,
                          m.tot_cs);
            out << m.method << buf;
        }
        if (!out) throw IoError("failed writing " + summary_csv.string());
    }
}

double regularized_incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0) || !(b > 0.0)) throw InvalidArgument("incomplete beta: a and b must be positive");
    if (!(x >= 0.0 && x <= 1.0)) throw InvalidArgument("incomplete beta: x must lie in [0, 1]");
    if (x == 0.0 || x == 1.0) return x;
    // Continued fraction converges fast for x < (a + 1) / (a + b + 2); use symmetry otherwise.
    if (x > (a + 1.0) / (a + b + 2.0)) return 1.0 - regularized_incomplete_beta(b, a, 1.0 - x);

    const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
    constexpr double tiny = 1e-300;
    constexpr double eps = 1e-16;
    // Modified Lentz evaluation.
    double c = 1.0;
    double d = 1.0 - (a + b) * x / (a + 1.0);
    if (std::abs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double f = d;
    for (int m = 1; m <= 10000; ++m) {
        const double m2 = 2.0 * m;
        double num = m * (b - m) * x / ((a + m2 - 1.0) * (a + m2));
        d = 1.0 + num * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + num / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        f *= d * c;
        num = -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1.0));
        d = 1.0 + num * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + num / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        f *= delta;
        if (std::abs(delta - 1.0) < eps) break;
    }
    return std::exp(log_front) * f / a;
}

PairedTTest paired_t_test(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw InvalidArgument("paired_t_test: samples differ in length");
    if (a.size() < 2) throw InvalidArgument("paired_t_test: need at least 2 pairs");
    const std::size_t n = a.size();
    std::vector<double> d(n);
    for (std::size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
    double mean = 0.0;
    for (double v : d) mean += v;
    mean /= double(n);
    double ss = 0.0;
    for (double v : d) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / double(n - 1));

    PairedTTest r;
    r.n = n;
    r.mean_difference = mean;
    r.df = double(n - 1);
    if (sd == 0.0) {
        r.t = mean == 0.0 ? 0.0 : std::copysign(INFINITY, mean);
        r.p_two_sided = mean == 0.0 ? 1.0 : 0.0;
        return r;
    }
    r.t = mean / (sd / std::sqrt(double(n)));
    r.p_two_sided = regularized_incomplete_beta(0.5 * r.df, 0.5, r.df / (r.df + r.t * r.t));
    return r;
}

} // namespace pcle
