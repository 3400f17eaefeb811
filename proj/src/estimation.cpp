#include "mmdesign/estimation.hpp"

#include "mmdesign/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>
#include <unordered_set>

namespace mmdesign {

namespace {

constexpr double kTruncationFactor = 1e-8;

double mean(const std::vector<double>& xs) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

double sample_cov(const std::vector<double>& a, const std::vector<double>& b) {
    const double ma = mean(a);
    const double mb = mean(b);
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - ma) * (b[i] - mb);
    return s / static_cast<double>(a.size() - 1);
}

double sample_var(const std::vector<double>& a) { return sample_cov(a, a); }

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r'))
        s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split(std::string_view line, char delim) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    for (;;) {
        const auto pos = line.find(delim, start);
        if (pos == std::string_view::npos) {
            cells.push_back(trim(line.substr(start)));
            return cells;
        }
        cells.push_back(trim(line.substr(start, pos - start)));
        start = pos + 1;
    }
}

double parse_number(std::string_view cell, const std::string& where) {
    double value = 0.0;
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    if (!cell.empty() && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last || !std::isfinite(value))
        throw ValidationError(where, "not a finite number: '" + std::string(cell) + "'");
    return value;
}

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

}  // namespace

void PilotDataset::validate() const {
    std::unordered_set<std::string> seen;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        const std::string where = "records[" + std::to_string(i) + "]";
        if (r.subject_id.empty()) throw ValidationError(where + ".subject_id", "empty");
        if (!seen.insert(r.subject_id).second)
            throw ValidationError(where + ".subject_id", "duplicate id '" + r.subject_id + "'");
        if (r.group != 1 && r.group != 2)
            throw ValidationError(where + ".group", "must be 1 or 2");
        if (!std::isfinite(r.q)) throw ValidationError(where + ".q", "must be finite");
        for (double m : r.replicates)
            if (!std::isfinite(m)) throw ValidationError(where + ".replicates", "must be finite");
    }
}

std::vector<int> PilotDataset::groups() const {
    std::set<int> g;
    for (const auto& r : records) g.insert(r.group);
    return {g.begin(), g.end()};
}

PilotDataset parse_pilot_csv(std::string_view text) {
    std::vector<std::string_view> lines;
    {
        std::size_t start = 0;
        while (start <= text.size()) {
            auto pos = text.find('\n', start);
            if (pos == std::string_view::npos) pos = text.size();
            lines.push_back(text.substr(start, pos - start));
            start = pos + 1;
        }
    }
    std::size_t first = 0;
    while (first < lines.size() && trim(lines[first]).empty()) ++first;
    if (first == lines.size()) throw ValidationError("line 1", "missing header row");

    const std::string_view header_line = lines[first];
    char delim = ',';
    if (header_line.find('\t') != std::string_view::npos) delim = '\t';
    else if (header_line.find(';') != std::string_view::npos) delim = ';';

    const auto header = split(header_line, delim);
    const std::string hline = "line " + std::to_string(first + 1);
    if (header.size() < 3 || lower(header[0]) != "subject_id" || lower(header[1]) != "group" ||
        lower(header[2]) != "q")
        throw ValidationError(hline, "header must start with subject_id, group, q");
    for (std::size_t c = 3; c < header.size(); ++c) {
        const std::string expect = "m" + std::to_string(c - 2);
        if (lower(header[c]) != expect)
            throw ValidationError(hline, "column " + std::to_string(c + 1) + " must be '" +
                                             expect + "'");
    }

    PilotDataset data;
    for (std::size_t li = first + 1; li < lines.size(); ++li) {
        if (trim(lines[li]).empty()) continue;
        const std::string where = "line " + std::to_string(li + 1);
        const auto cells = split(lines[li], delim);
        if (cells.size() > header.size())
            throw ValidationError(where, "more cells than header columns");
        if (cells.size() < 3) throw ValidationError(where, "need subject_id, group and q");

        PilotRecord rec;
        rec.subject_id = std::string(cells[0]);
        if (rec.subject_id.empty()) throw ValidationError(where, "empty subject_id");
        const double g = parse_number(cells[1], where + " group");
        if (g != 1.0 && g != 2.0) throw ValidationError(where, "group must be 1 or 2");
        rec.group = static_cast<int>(g);
        if (cells[2].empty()) throw ValidationError(where, "missing q");
        rec.q = parse_number(cells[2], where + " q");
        for (std::size_t c = 3; c < cells.size(); ++c)
            if (!cells[c].empty()) rec.replicates.push_back(parse_number(cells[c], where));
        data.records.push_back(std::move(rec));
    }
    data.validate();
    return data;
}

PilotDataset read_pilot_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("input", "cannot open pilot file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_pilot_csv(buf.str());
}

void write_pilot_csv(std::ostream& out, const PilotDataset& data) {
    std::size_t k_max = 0;
    for (const auto& r : data.records) k_max = std::max(k_max, r.replicates.size());
    out << "subject_id,group,q";
    for (std::size_t k = 1; k <= k_max; ++k) out << ",m" << k;
    out << '\n';
    const auto old_precision = out.precision(17);
    for (const auto& r : data.records) {
        out << r.subject_id << ',' << r.group << ',' << r.q;
        for (std::size_t k = 0; k < k_max; ++k) {
            out << ',';
            if (k < r.replicates.size()) out << r.replicates[k];
        }
        out << '\n';
    }
    out.precision(old_precision);
}

GroupSample group_sample(const PilotDataset& data, int group) {
    GroupSample s;
    for (const auto& r : data.records) {
        if (r.group != group) continue;
        s.q_all.push_back(r.q);
        if (r.replicates.empty()) continue;
        double sum = 0.0;
        for (double m : r.replicates) sum += m;
        s.q_cal.push_back(r.q);
        s.mbar_cal.push_back(sum / static_cast<double>(r.replicates.size()));
        s.k_cal.push_back(static_cast<std::int64_t>(r.replicates.size()));
    }
    return s;
}

MuEstimate mle_mu(const GroupSample& sample) {
    const auto n = sample.q_cal.size();
    if (static_cast<std::int64_t>(n) < kMinCalibration)
        throw DataError("insufficient data: calibration subsample has " + std::to_string(n) +
                        " subjects, need at least 4");
    const double q_bar_n = mean(sample.q_cal);
    const double m_bar_n = mean(sample.mbar_cal);
    double sxx = 0.0;
    double sxy = 0.0;
    double scale = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        const double dq = sample.q_cal[j] - q_bar_n;
        sxx += dq * dq;
        sxy += dq * (sample.mbar_cal[j] - m_bar_n);
        scale += sample.q_cal[j] * sample.q_cal[j];
    }
    if (!(sxx > 1e-14 * scale))
        throw DataError("degenerate data: indirect measure Q has zero variance in the "
                        "calibration subsample");

    MuEstimate est;
    est.beta1_hat = sxy / sxx;
    est.beta0_hat = m_bar_n - est.beta1_hat * q_bar_n;
    est.nu_hat = mean(sample.q_all);
    est.mu_hat = est.beta0_hat + est.beta1_hat * est.nu_hat;
    return est;
}

MuEstimate mle_mu(const PilotDataset& data, int group) {
    return mle_mu(group_sample(data, group));
}

ModelParams GroupEstimates::to_model_params() const {
    ModelParams p;
    p.sigma2_eps = sigma2_eps.value;
    p.r_delta = r_delta.value;
    p.r_phi = r_phi.value;
    p.alpha0 = alpha0.value;
    p.alpha1 = alpha1.value;
    p.sigma2_phi = sigma2_phi.value;
    p.sigma2_delta = sigma2_delta.value;
    return p;
}

GroupEstimates estimate_params(const PilotDataset& data, int group,
                               std::optional<double> r_delta_external) {
    if (r_delta_external && !(std::isfinite(*r_delta_external) && *r_delta_external >= 0))
        throw ValidationError("r_delta", "external r_delta must be >= 0");

    const GroupSample sample = group_sample(data, group);
    const MuEstimate mu = mle_mu(sample);  // checks n >= 4 and Q spread

    GroupEstimates out;
    out.group = group;
    out.n_total = sample.n_total();
    out.n_direct = sample.n_direct();
    out.k_reps = *std::max_element(sample.k_cal.begin(), sample.k_cal.end());

    const std::string tag = "group " + std::to_string(group) + ": ";

    double within_ss = 0.0;
    std::int64_t within_df = 0;
    for (const auto& r : data.records) {
        if (r.group != group || r.replicates.size() < 2) continue;
        double s = 0.0;
        for (double m : r.replicates) s += m;
        const double mbar = s / static_cast<double>(r.replicates.size());
        for (double m : r.replicates) within_ss += (m - mbar) * (m - mbar);
        within_df += static_cast<std::int64_t>(r.replicates.size()) - 1;
    }

    double mean_inv_k = 0.0;
    for (auto k : sample.k_cal) mean_inv_k += 1.0 / static_cast<double>(k);
    mean_inv_k /= static_cast<double>(sample.k_cal.size());

    const double var_mbar = sample_var(sample.mbar_cal);
    if (!(var_mbar > 0))
        throw DataError(tag + "degenerate data: replicate means have zero variance");
    const double floor_value = kTruncationFactor * var_mbar;

    double s2_delta = 0.0;
    double s2_eps = 0.0;
    if (r_delta_external) {
        out.r_delta_external = true;
        s2_eps = var_mbar / (1.0 + *r_delta_external * mean_inv_k);
        s2_delta = *r_delta_external * s2_eps;
        if (within_df > 0)
            out.warnings.push_back(tag + "replicates present; external r_delta overrides the "
                                         "within-subject estimate");
    } else {
        if (within_df == 0)
            throw DataError(tag + "sigma2_delta is not identifiable with one direct measurement "
                                  "per subject (K = 1); supply r_delta externally");
        s2_delta = within_ss / static_cast<double>(within_df);
        s2_eps = var_mbar - s2_delta * mean_inv_k;
        if (s2_eps < floor_value) {
            out.warnings.push_back(tag + "sigma2_eps estimate " + std::to_string(s2_eps) +
                                   " truncated to " + std::to_string(floor_value) +
                                   " (replicate noise exceeds spread of subject means)");
            s2_eps = floor_value;
        }
    }

    const double cov_qm = sample_cov(sample.q_cal, sample.mbar_cal);
    const double a1 = cov_qm / s2_eps;
    if (a1 == 0.0)
        throw DataError(tag + "degenerate data: Q is uncorrelated with the direct measures");
    double s2_phi = sample_var(sample.q_all) - a1 * a1 * s2_eps;
    if (s2_phi < floor_value) {
        out.warnings.push_back(tag + "sigma2_phi estimate " + std::to_string(s2_phi) +
                               " truncated to " + std::to_string(floor_value));
        s2_phi = floor_value;
    }
    const double m_bar_n = mean(sample.mbar_cal);

    out.sigma2_delta.value = s2_delta;
    out.sigma2_eps.value = s2_eps;
    out.alpha1.value = a1;
    out.sigma2_phi.value = s2_phi;
    out.alpha0.value = mean(sample.q_all) - a1 * m_bar_n;
    out.r_delta.value = s2_delta / s2_eps;
    out.r_phi.value = s2_phi / (a1 * a1 * s2_eps);
    out.mu_hat.value = mu.mu_hat;
    out.nu_hat.value = mu.nu_hat;
    out.beta0_hat.value = mu.beta0_hat;
    out.beta1_hat.value = mu.beta1_hat;

    const Design pilot{out.n_total, out.n_direct, out.k_reps};
    out.mu_hat.se = std::sqrt(var_mu_hat(out.to_model_params(), pilot));
    if (out.n_direct < kFragileCalibration)
        out.warnings.push_back(tag + "calibration subsample n = " + std::to_string(out.n_direct) +
                               " < 10; estimates are fragile");
    return out;
}

ParamEstimates estimate_all(const PilotDataset& data, std::optional<double> r_delta_external) {
    data.validate();
    ParamEstimates all;
    for (int g : data.groups()) all.groups.push_back(estimate_params(data, g, r_delta_external));
    if (all.groups.empty()) throw DataError("pilot dataset has no records");
    return all;
}

}  // namespace mmdesign
