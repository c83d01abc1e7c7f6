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

#ifndef PCLE_IQA_HPP
#define PCLE_IQA_HPP

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "pcle/image.hpp"

namespace pcle {

struct SsimParams {
    int window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double dynamic_range = 1.0;

    void validate() const;
};

/**
 * Mean SSIM over every window position whose full Gaussian footprint lies
 * inside the frame and inside both FoV masks.
 *
 * Throws InvalidArgument when no such window exists.
 */
double ssim(const Image& a, const Image& b, const SsimParams& params = {});

struct GcfParams {
    std::vector<int> factors{1, 2, 4, 8, 16, 25, 50, 100, 200};
    double gamma = 2.2;
    std::vector<double> weights = default_weights(9);

    /// w_i = (-0.406385 i/n + 0.334573) i/n + 0.0877526 for i = 1..n, with n = 9 the reference level count.
    static std::vector<double> default_weights(std::size_t levels);

    std::size_t levels() const noexcept { return factors.size(); }
    void validate() const;
};

struct GcfResult {
    double value = 0.0;
    /// Mean local contrast per evaluated level.
    std::vector<double> level_contrast;
    /// Levels skipped because their superpixel grid had no neighbouring pair.
    std::size_t truncated = 0;
};

/**
 * Global contrast factor.
 *
 * Per level, linear luminance max(v, 0)^gamma is averaged over r x r
 * superpixels (in-FoV pixels only), mapped to L = 100 sqrt(.), and the local
 * contrast of a superpixel is its mean absolute L difference to valid
 * 4-neighbours. The result is the weighted sum of per-level mean contrasts.
 */
GcfResult gcf_detail(const Image& img, const GcfParams& params = {});
double gcf(const Image& img, const GcfParams& params = {});

/// gcf(a) - gcf(b).
double delta_gcf(const Image& a, const Image& b, const GcfParams& params = {});

struct MethodFactors {
    std::string method;
    double ssim_vs_hr = 0.0;
    double dgcf_vs_lr = 0.0;
};

/// Mean of min-max normalized SSIM and delta GCF over the given method set; a flat factor contributes 0.5.
std::vector<double> tot_cs(const std::vector<MethodFactors>& rows);

/// alpha (1 - ssim) + (1 - alpha) mean |a - b| over the shared FoV.
double ssim_l1_score(const Image& a, const Image& b, double alpha = 0.84, const SsimParams& params = {});

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;
};

/// Mean and population standard deviation; zeros for an empty input.
MeanStd mean_std(const std::vector<double>& values);

/// Images keyed by image id.
using ImageSet = std::map<std::string, Image>;

struct MetricRow {
    std::string image_id;
    std::string method;
    double ssim_vs_hr = 0.0;
    double gcf = 0.0;
    double gcf_lr = 0.0;
    double gcf_hr = 0.0;
};

struct MethodScores {
    std::string method;
    MeanStd ssim_vs_hr;
    MeanStd dgcf_vs_hr;
    MeanStd dgcf_vs_lr;
    double tot_cs = 0.0;
};

struct MetricsReport {
    std::vector<MetricRow> rows;
    std::vector<MethodScores> methods;
    SsimParams ssim_params;
    GcfParams gcf_params;
};

inline const std::string kLrMethod = "LR";

/**
 * Scores every method against the HR set, adding the LR input as a method.
 * Rows are sorted by (method, image id). Throws InvalidArgument naming any id
 * missing from a collection.
 */
MetricsReport evaluate(const std::map<std::string, ImageSet>& methods, const ImageSet& lr, const ImageSet& hr,
                       const SsimParams& ssim_params = {}, const GcfParams& gcf_params = {}, int threads = 1);

/// Recomputes aggregates and Tot_cs from per-image rows.
std::vector<MethodScores> aggregate_rows(const std::vector<MetricRow>& rows);

/// Writes `<prefix>_rows.csv` and `<prefix>_summary.csv`, each led by a `# {json}` parameter line.
void write_metrics_report(const MetricsReport& report, const std::filesystem::path& rows_csv,
                          const std::filesystem::path& summary_csv);

struct PairedTTest {
    std::size_t n = 0;
    double mean_difference = 0.0;
    double t = 0.0;
    double df = 0.0;
    double p_two_sided = 1.0;
};

/// Paired Student t-test on a - b.
PairedTTest paired_t_test(const std::vector<double>& a, const std::vector<double>& b);

/// Regularized incomplete beta I_x(a, b).
double regularized_incomplete_beta(double a, double b, double x);

} // namespace pcle

#endif // PCLE_IQA_HPP
