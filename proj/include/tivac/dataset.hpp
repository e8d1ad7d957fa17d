#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "tivac/error.hpp"
#include "tivac/io.hpp"
#include "tivac/stats.hpp"

namespace tivac {

struct SubjectRecord {
    std::string id;
    std::vector<double> times;  // strictly increasing (non-decreasing when duplicates allowed)
    std::vector<double> y1;
    std::vector<double> y2;

    std::size_t size() const { return times.size(); }
};

// Bivariate longitudinal outcomes plus one covariate row per subject.
// Immutable after construction; transforms return new datasets.
struct LongitudinalDataset {
    std::vector<SubjectRecord> subjects;
    Eigen::MatrixXd covariates;  // n x p
    std::vector<std::string> covariate_names;
    double t_min = 0.0;
    double t_max = 0.0;

    int n() const { return static_cast<int>(subjects.size()); }
    int p() const { return static_cast<int>(covariates.cols()); }

    std::size_t total_observations() const {
        std::size_t total = 0;
        for (const auto& s : subjects) total += s.size();
        return total;
    }
};

inline void validate_dataset(LongitudinalDataset& data, bool allow_duplicate_times = false) {
    const int n = data.n();
    const int p = data.p();
    if (n < 1) fail("bad_dataset", "dataset has no subjects");
    if (p < 1) fail("bad_dataset", "dataset has no covariates");
    if (n <= p) {
        fail("bad_dataset", "need more subjects than covariates (n = " + std::to_string(n) +
                                ", p = " + std::to_string(p) + ")");
    }
    if (static_cast<int>(data.covariates.rows()) != n) {
        fail("bad_dataset", "covariate matrix rows do not match subject count");
    }
    if (data.covariate_names.size() != static_cast<std::size_t>(p)) {
        fail("bad_dataset", "covariate name count does not match covariate columns");
    }
    if (!data.covariates.allFinite()) fail("bad_dataset", "covariates contain non-finite values");
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const auto& s : data.subjects) {
        if (s.times.empty()) fail("bad_dataset", "subject " + s.id + " has no observations");
        if (s.times.size() != s.y1.size() || s.times.size() != s.y2.size()) {
            fail("bad_dataset", "subject " + s.id + " has misaligned times and outcomes");
        }
        for (std::size_t j = 0; j < s.times.size(); ++j) {
            if (!std::isfinite(s.times[j]) || !std::isfinite(s.y1[j]) || !std::isfinite(s.y2[j])) {
                fail("bad_dataset", "subject " + s.id + " has non-finite values");
            }
            if (j > 0) {
                const bool ok = allow_duplicate_times ? s.times[j] >= s.times[j - 1]
                                                      : s.times[j] > s.times[j - 1];
                if (!ok) {
                    fail("bad_dataset", "subject " + s.id + " has non-increasing times");
                }
            }
        }
        lo = std::min(lo, s.times.front());
        hi = std::max(hi, s.times.back());
    }
    data.t_min = lo;
    data.t_max = hi;
    if (!(data.t_min < data.t_max)) {
        fail("bad_dataset", "all observations share a single time point");
    }
}

namespace detail {

inline double parse_numeric_field(const std::string& field, const std::string& file, int line,
                                  const std::string& what) {
    double value;
    if (!try_parse_double(field, value)) {
        fail("csv_parse", file + ":" + std::to_string(line) + ": non-numeric " + what + " '" +
                              trim(field) + "'");
    }
    if (!std::isfinite(value)) {
        fail("csv_nonfinite",
             file + ":" + std::to_string(line) + ": non-finite " + what + " '" + trim(field) + "'");
    }
    return value;
}

}  // namespace detail

// Long-format outcome CSV (`subject_id,time,y1,y2`) joined with a covariate
// CSV (`subject_id,<name1>,...,<namep>`).  Subjects keep outcome-file order;
// rows within a subject are sorted by time.
inline LongitudinalDataset load_csv(const std::string& outcome_path,
                                    const std::string& covariate_path,
                                    bool allow_duplicate_times = false) {
    std::ifstream out_file(outcome_path);
    if (!out_file) fail("io_missing_file", "cannot open outcome file: " + outcome_path);
    std::ifstream cov_file(covariate_path);
    if (!cov_file) fail("io_missing_file", "cannot open covariate file: " + covariate_path);

    LongitudinalDataset data;
    std::unordered_map<std::string, std::size_t> subject_index;

    std::string line;
    int line_no = 0;
    bool saw_header = false;
    while (std::getline(out_file, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto fields = split_line(line);
        if (!saw_header) {
            if (fields.size() != 4 || trim(fields[0]) != "subject_id" ||
                trim(fields[1]) != "time" || trim(fields[2]) != "y1" || trim(fields[3]) != "y2") {
                fail("csv_header", outcome_path + ":" + std::to_string(line_no) +
                                       ": expected header 'subject_id,time,y1,y2'");
            }
            saw_header = true;
            continue;
        }
        if (fields.size() != 4) {
            fail("csv_parse", outcome_path + ":" + std::to_string(line_no) +
                                  ": expected 4 fields, found " + std::to_string(fields.size()));
        }
        const std::string id = trim(fields[0]);
        if (id.empty()) {
            fail("csv_parse", outcome_path + ":" + std::to_string(line_no) + ": empty subject_id");
        }
        const double t = detail::parse_numeric_field(fields[1], outcome_path, line_no, "time");
        const double y1 = detail::parse_numeric_field(fields[2], outcome_path, line_no, "y1");
        const double y2 = detail::parse_numeric_field(fields[3], outcome_path, line_no, "y2");
        auto [it, inserted] = subject_index.try_emplace(id, data.subjects.size());
        if (inserted) {
            data.subjects.push_back(SubjectRecord{id, {}, {}, {}});
        }
        auto& subject = data.subjects[it->second];
        subject.times.push_back(t);
        subject.y1.push_back(y1);
        subject.y2.push_back(y2);
    }
    if (!saw_header) fail("csv_empty", outcome_path + ": file is empty");
    if (data.subjects.empty()) fail("csv_empty", outcome_path + ": no data rows");

    // per-subject sort by time, then duplicate check
    for (auto& subject : data.subjects) {
        std::vector<std::size_t> order(subject.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return subject.times[a] < subject.times[b];
        });
        SubjectRecord sorted{subject.id, {}, {}, {}};
        sorted.times.reserve(subject.size());
        for (std::size_t idx : order) {
            sorted.times.push_back(subject.times[idx]);
            sorted.y1.push_back(subject.y1[idx]);
            sorted.y2.push_back(subject.y2[idx]);
        }
        for (std::size_t j = 1; j < sorted.size(); ++j) {
            if (sorted.times[j] == sorted.times[j - 1] && !allow_duplicate_times) {
                fail("csv_duplicate_time",
                     outcome_path + ": duplicate time " + format_double(sorted.times[j]) +
                         " for subject " + subject.id +
                         " (pass --allow-duplicate-times to keep both rows)");
            }
        }
        subject = std::move(sorted);
    }

    // covariate file
    line_no = 0;
    saw_header = false;
    std::unordered_map<std::string, std::vector<double>> covariate_rows;
    while (std::getline(cov_file, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto fields = split_line(line);
        if (!saw_header) {
            if (fields.size() < 2 || trim(fields[0]) != "subject_id") {
                fail("csv_header", covariate_path + ":" + std::to_string(line_no) +
                                       ": expected header 'subject_id,<name1>,...'");
            }
            for (std::size_t c = 1; c < fields.size(); ++c) {
                const std::string name = trim(fields[c]);
                if (name.empty()) {
                    fail("csv_header", covariate_path + ":" + std::to_string(line_no) +
                                           ": empty covariate name");
                }
                data.covariate_names.push_back(name);
            }
            saw_header = true;
            continue;
        }
        if (fields.size() != data.covariate_names.size() + 1) {
            fail("csv_parse", covariate_path + ":" + std::to_string(line_no) + ": expected " +
                                  std::to_string(data.covariate_names.size() + 1) +
                                  " fields, found " + std::to_string(fields.size()));
        }
        const std::string id = trim(fields[0]);
        std::vector<double> row(data.covariate_names.size());
        for (std::size_t c = 0; c < row.size(); ++c) {
            row[c] = detail::parse_numeric_field(fields[c + 1], covariate_path, line_no,
                                                 "covariate '" + data.covariate_names[c] + "'");
        }
        if (!covariate_rows.emplace(id, std::move(row)).second) {
            fail("csv_duplicate_subject", covariate_path + ":" + std::to_string(line_no) +
                                              ": subject " + id + " appears more than once");
        }
    }
    if (!saw_header) fail("csv_empty", covariate_path + ": file is empty");

    const int n = data.n();
    const int p = static_cast<int>(data.covariate_names.size());
    data.covariates.resize(n, p);
    for (int i = 0; i < n; ++i) {
        auto it = covariate_rows.find(data.subjects[static_cast<std::size_t>(i)].id);
        if (it == covariate_rows.end()) {
            fail("csv_missing_subject",
                 covariate_path + ": subject " + data.subjects[static_cast<std::size_t>(i)].id +
                     " from the outcome file has no covariate row");
        }
        for (int c = 0; c < p; ++c) {
            data.covariates(i, c) = it->second[static_cast<std::size_t>(c)];
        }
    }

    validate_dataset(data, allow_duplicate_times);
    return data;
}

inline void save_csv(const LongitudinalDataset& data, const std::string& outcome_path,
                     const std::string& covariate_path) {
    std::string out = "subject_id,time,y1,y2\n";
    for (const auto& s : data.subjects) {
        for (std::size_t j = 0; j < s.size(); ++j) {
            out += s.id;
            out += ',';
            out += format_double(s.times[j]);
            out += ',';
            out += format_double(s.y1[j]);
            out += ',';
            out += format_double(s.y2[j]);
            out += '\n';
        }
    }
    write_text_file(outcome_path, out);

    std::string cov = "subject_id";
    for (const auto& name : data.covariate_names) {
        cov += ',';
        cov += name;
    }
    cov += '\n';
    for (int i = 0; i < data.n(); ++i) {
        cov += data.subjects[static_cast<std::size_t>(i)].id;
        for (int c = 0; c < data.p(); ++c) {
            cov += ',';
            cov += format_double(data.covariates(i, c));
        }
        cov += '\n';
    }
    write_text_file(covariate_path, cov);
}

// Subtracts each group's pooled per-coordinate mean (all subjects, all
// times).  The group column must be discrete.
inline LongitudinalDataset center_by_group(const LongitudinalDataset& data, int group_column) {
    if (group_column < 0 || group_column >= data.p()) {
        fail("bad_group_column", "group column index out of range");
    }
    std::map<double, std::vector<int>> groups;
    for (int i = 0; i < data.n(); ++i) {
        groups[data.covariates(i, group_column)].push_back(i);
    }
    if (static_cast<int>(groups.size()) == data.n() && data.n() > 1) {
        fail("group_column_continuous",
             "group column '" + data.covariate_names[static_cast<std::size_t>(group_column)] +
                 "' has as many distinct values as subjects; grouping is meaningless");
    }
    LongitudinalDataset out = data;
    for (const auto& [value, members] : groups) {
        double sum1 = 0.0, sum2 = 0.0;
        std::size_t count = 0;
        for (int i : members) {
            const auto& s = data.subjects[static_cast<std::size_t>(i)];
            for (std::size_t j = 0; j < s.size(); ++j) {
                sum1 += s.y1[j];
                sum2 += s.y2[j];
            }
            count += s.size();
        }
        const double mean1 = sum1 / static_cast<double>(count);
        const double mean2 = sum2 / static_cast<double>(count);
        for (int i : members) {
            auto& s = out.subjects[static_cast<std::size_t>(i)];
            for (std::size_t j = 0; j < s.size(); ++j) {
                s.y1[j] -= mean1;
                s.y2[j] -= mean2;
            }
        }
    }
    return out;
}

// Rank-based inverse normal transform, pooled per coordinate:
// z = Phi^{-1}(midrank / (N + 1)).  Ties share the mid-rank, so order is
// preserved and tied values stay tied.
inline LongitudinalDataset quantile_transform(const LongitudinalDataset& data) {
    LongitudinalDataset out = data;
    for (int coord = 0; coord < 2; ++coord) {
        std::vector<double*> slots;
        for (auto& s : out.subjects) {
            auto& ys = coord == 0 ? s.y1 : s.y2;
            for (double& y : ys) slots.push_back(&y);
        }
        const std::size_t total = slots.size();
        if (total < 2) fail("quantile_degenerate", "need at least 2 pooled observations");
        std::vector<std::size_t> order(total);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return *slots[a] < *slots[b]; });
        if (*slots[order.front()] == *slots[order.back()]) {
            fail("quantile_degenerate", std::string("outcome y") + (coord == 0 ? "1" : "2") +
                                            " is constant; quantile transform undefined");
        }
        std::vector<double> transformed(total);
        std::size_t start = 0;
        while (start < total) {
            std::size_t end = start;
            while (end + 1 < total && *slots[order[end + 1]] == *slots[order[start]]) ++end;
            // mid-rank of the tie block, 1-based
            const double midrank = (static_cast<double>(start + 1) + static_cast<double>(end + 1)) / 2.0;
            const double z = normal_quantile(midrank / static_cast<double>(total + 1));
            for (std::size_t k = start; k <= end; ++k) transformed[order[k]] = z;
            start = end + 1;
        }
        for (std::size_t k = 0; k < total; ++k) *slots[k] = transformed[k];
    }
    return out;
}

}  // namespace tivac
