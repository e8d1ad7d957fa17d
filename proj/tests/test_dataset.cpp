#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <string>

#include "tivac/dataset.hpp"
#include "tivac/rng.hpp"

using Catch::Approx;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() : path(fs::temp_directory_path() / "tivac_dataset_test") {
        fs::create_directories(path);
    }
    std::string file(const std::string& name, const std::string& content) const {
        const std::string full = (path / name).string();
        tivac::write_text_file(full, content);
        return full;
    }
};

const std::string kOutcomes =
    "subject_id,time,y1,y2\n"
    "A,3,0.5,1.25\n"
    "A,1,-0.5,0.75\n"
    "B,2,1.5,-0.25\n";
const std::string kCovariates =
    "subject_id,x\n"
    "A,0\n"
    "B,1\n";

}  // namespace

TEST_CASE("load_csv parses, orders subjects by first appearance, sorts times") {
    TempDir dir;
    const auto data = tivac::load_csv(dir.file("o.csv", kOutcomes), dir.file("c.csv", kCovariates));
    REQUIRE(data.n() == 2);
    REQUIRE(data.p() == 1);
    REQUIRE(data.subjects[0].id == "A");
    REQUIRE(data.subjects[0].times == std::vector<double>{1.0, 3.0});
    REQUIRE(data.subjects[0].y1 == std::vector<double>{-0.5, 0.5});
    REQUIRE(data.subjects[1].id == "B");
    REQUIRE(data.subjects[1].size() == 1);
    REQUIRE(data.covariates(0, 0) == 0.0);
    REQUIRE(data.covariates(1, 0) == 1.0);
    REQUIRE(data.t_min == 1.0);
    REQUIRE(data.t_max == 3.0);
}

TEST_CASE("load_csv error reporting carries file, line, and reason") {
    TempDir dir;

    SECTION("missing subject in the covariate file is named") {
        const auto cov = dir.file("c.csv", "subject_id,x\nA,0\n");
        try {
            tivac::load_csv(dir.file("o.csv", kOutcomes), cov);
            FAIL("expected an error");
        } catch (const tivac::Error& e) {
            REQUIRE(e.code() == "csv_missing_subject");
            REQUIRE(std::string(e.what()).find("B") != std::string::npos);
        }
    }

    SECTION("non-finite outcome value names the line") {
        const auto out = dir.file("o.csv",
                                  "subject_id,time,y1,y2\n"
                                  "A,1,0.5,0.25\n"
                                  "A,3,0.5,NaN\n"
                                  "B,2,1.0,1.0\n");
        try {
            tivac::load_csv(out, dir.file("c.csv", kCovariates));
            FAIL("expected an error");
        } catch (const tivac::Error& e) {
            REQUIRE(e.code() == "csv_nonfinite");
            REQUIRE(std::string(e.what()).find(":3:") != std::string::npos);
        }
    }

    SECTION("non-numeric field") {
        const auto out = dir.file("o.csv",
                                  "subject_id,time,y1,y2\n"
                                  "A,1,zero,0.25\n"
                                  "B,2,1.0,1.0\n");
        REQUIRE_THROWS_AS(tivac::load_csv(out, dir.file("c.csv", kCovariates)), tivac::Error);
    }

    SECTION("duplicate (subject, time) rows rejected unless allowed") {
        const auto out = dir.file("o.csv",
                                  "subject_id,time,y1,y2\n"
                                  "A,1,0.5,0.25\n"
                                  "A,1,0.6,0.30\n"
                                  "B,2,1.0,1.0\n");
        const auto cov = dir.file("c.csv", kCovariates);
        try {
            tivac::load_csv(out, cov);
            FAIL("expected an error");
        } catch (const tivac::Error& e) {
            REQUIRE(e.code() == "csv_duplicate_time");
        }
        const auto data = tivac::load_csv(out, cov, /*allow_duplicate_times=*/true);
        REQUIRE(data.subjects[0].size() == 2);
    }

    SECTION("empty files") {
        const auto empty = dir.file("empty.csv", "");
        REQUIRE_THROWS_AS(tivac::load_csv(empty, dir.file("c.csv", kCovariates)), tivac::Error);
        const auto header_only = dir.file("h.csv", "subject_id,time,y1,y2\n");
        REQUIRE_THROWS_AS(tivac::load_csv(header_only, dir.file("c.csv", kCovariates)),
                          tivac::Error);
    }

    SECTION("missing files") {
        try {
            tivac::load_csv("/nonexistent/o.csv", "/nonexistent/c.csv");
            FAIL("expected an error");
        } catch (const tivac::Error& e) {
            REQUIRE(e.code() == "io_missing_file");
        }
    }
}

TEST_CASE("save/load round trip is bitwise exact") {
    TempDir dir;
    tivac::RngStream stream(99);
    std::string outcomes = "subject_id,time,y1,y2\n";
    for (int i = 0; i < 5; ++i) {
        for (int j = 0; j < 4; ++j) {
            outcomes += "s" + std::to_string(i) + "," +
                        tivac::format_double(j + stream.uniform()) + "," +
                        tivac::format_double(stream.normal()) + "," +
                        tivac::format_double(stream.normal() * 1e-7) + "\n";
        }
    }
    std::string covs = "subject_id,a,b\n";
    for (int i = 0; i < 5; ++i) {
        covs += "s" + std::to_string(i) + "," + tivac::format_double(stream.normal()) + "," +
                tivac::format_double(stream.uniform()) + "\n";
    }
    const auto first = tivac::load_csv(dir.file("o.csv", outcomes), dir.file("c.csv", covs));
    tivac::save_csv(first, (dir.path / "o2.csv").string(), (dir.path / "c2.csv").string());
    const auto second =
        tivac::load_csv((dir.path / "o2.csv").string(), (dir.path / "c2.csv").string());

    REQUIRE(second.n() == first.n());
    REQUIRE(second.covariate_names == first.covariate_names);
    REQUIRE((second.covariates - first.covariates).cwiseAbs().maxCoeff() == 0.0);
    for (int i = 0; i < first.n(); ++i) {
        REQUIRE(second.subjects[static_cast<std::size_t>(i)].times ==
                first.subjects[static_cast<std::size_t>(i)].times);
        REQUIRE(second.subjects[static_cast<std::size_t>(i)].y1 ==
                first.subjects[static_cast<std::size_t>(i)].y1);
        REQUIRE(second.subjects[static_cast<std::size_t>(i)].y2 ==
                first.subjects[static_cast<std::size_t>(i)].y2);
    }
}

namespace {

tivac::LongitudinalDataset tiny_dataset(const std::vector<std::vector<double>>& y1_groups,
                                        const std::vector<double>& group_values) {
    tivac::LongitudinalDataset data;
    data.covariate_names = {"g", "z"};
    int total_subjects = 0;
    for (const auto& g : y1_groups) total_subjects += static_cast<int>(g.size());
    data.covariates.resize(total_subjects, 2);
    int idx = 0;
    for (std::size_t g = 0; g < y1_groups.size(); ++g) {
        for (double y : y1_groups[g]) {
            tivac::SubjectRecord s;
            s.id = "s" + std::to_string(idx);
            s.times = {1.0, 2.0};
            s.y1 = {y, y + 0.5};
            s.y2 = {-y, -y + 0.25};
            data.subjects.push_back(std::move(s));
            data.covariates(idx, 0) = group_values[g];
            data.covariates(idx, 1) = 0.01 * idx;
            ++idx;
        }
    }
    tivac::validate_dataset(data);
    return data;
}

}  // namespace

TEST_CASE("center_by_group subtracts pooled per-group means") {
    SECTION("single group: pooled y1 {1, 3} centers to {-1, 1}") {
        tivac::LongitudinalDataset data;
        data.covariate_names = {"g"};
        data.covariates = Eigen::MatrixXd::Zero(2, 1);
        data.subjects = {tivac::SubjectRecord{"a", {1}, {1.0}, {0.5}},
                         tivac::SubjectRecord{"b", {2}, {3.0}, {-0.5}}};
        tivac::validate_dataset(data);
        const auto centered = tivac::center_by_group(data, 0);
        REQUIRE(centered.subjects[0].y1 == std::vector<double>{-1.0});
        REQUIRE(centered.subjects[1].y1 == std::vector<double>{1.0});
    }

    SECTION("per-group means, hand oracle") {
        // group A pooled y1 {0, 2} -> {-1, 1}; group B pooled {10, 14} -> {-2, 2}
        tivac::LongitudinalDataset data;
        data.covariate_names = {"g"};
        data.covariates.resize(4, 1);
        data.covariates << 0.0, 0.0, 1.0, 1.0;
        data.subjects = {tivac::SubjectRecord{"a1", {1}, {0.0}, {0.0}},
                         tivac::SubjectRecord{"a2", {2}, {2.0}, {0.5}},
                         tivac::SubjectRecord{"b1", {1}, {10.0}, {1.0}},
                         tivac::SubjectRecord{"b2", {2}, {14.0}, {0.0}}};
        tivac::validate_dataset(data);
        const auto centered = tivac::center_by_group(data, 0);
        REQUIRE(centered.subjects[0].y1 == std::vector<double>{-1.0});
        REQUIRE(centered.subjects[1].y1 == std::vector<double>{1.0});
        REQUIRE(centered.subjects[2].y1 == std::vector<double>{-2.0});
        REQUIRE(centered.subjects[3].y1 == std::vector<double>{2.0});
    }

    SECTION("group means vanish and recentering changes nothing") {
        auto data = tiny_dataset({{0.4, -1.2, 2.2}, {5.0, 3.5, 1.1}}, {0.0, 1.0});
        const auto centered = tivac::center_by_group(data, 0);
        for (double group : {0.0, 1.0}) {
            double sum1 = 0.0, sum2 = 0.0;
            int count = 0;
            for (int i = 0; i < centered.n(); ++i) {
                if (centered.covariates(i, 0) != group) continue;
                const auto& s = centered.subjects[static_cast<std::size_t>(i)];
                for (std::size_t j = 0; j < s.size(); ++j) {
                    sum1 += s.y1[j];
                    sum2 += s.y2[j];
                    ++count;
                }
            }
            REQUIRE(std::abs(sum1 / count) < 1e-12);
            REQUIRE(std::abs(sum2 / count) < 1e-12);
        }
        const auto twice = tivac::center_by_group(centered, 0);
        for (int i = 0; i < twice.n(); ++i) {
            for (std::size_t j = 0; j < twice.subjects[static_cast<std::size_t>(i)].size(); ++j) {
                REQUIRE(twice.subjects[static_cast<std::size_t>(i)].y1[j] ==
                        Approx(centered.subjects[static_cast<std::size_t>(i)].y1[j])
                            .margin(1e-12));
            }
        }
    }

    SECTION("continuous group column is rejected") {
        auto data = tiny_dataset({{0.4, -1.2, 2.2, 0.9}}, {0.0});
        try {
            tivac::center_by_group(data, 1);  // column z is distinct per subject
            FAIL("expected an error");
        } catch (const tivac::Error& e) {
            REQUIRE(e.code() == "group_column_continuous");
        }
    }
}

TEST_CASE("quantile transform maps mid-ranks through the normal quantile") {
    SECTION("three distinct values") {
        tivac::LongitudinalDataset data;
        data.covariate_names = {"x"};
        data.covariates = Eigen::MatrixXd::Zero(2, 1);
        data.subjects = {tivac::SubjectRecord{"a", {1, 2}, {5.0, 1.0}, {0.0, 1.0}},
                         tivac::SubjectRecord{"b", {1.5}, {9.0}, {2.0}}};
        tivac::validate_dataset(data);
        const auto out = tivac::quantile_transform(data);
        // ranks 2, 1, 3 of N=3 -> quantiles at 0.5, 0.25, 0.75
        REQUIRE(out.subjects[0].y1[0] == Approx(0.0).margin(1e-12));
        REQUIRE(out.subjects[0].y1[1] == Approx(-0.6744897501960817).margin(1e-9));
        REQUIRE(out.subjects[1].y1[0] == Approx(0.6744897501960817).margin(1e-9));
    }

    SECTION("ties share the mid-rank value") {
        tivac::LongitudinalDataset data;
        data.covariate_names = {"x"};
        data.covariates = Eigen::MatrixXd::Zero(2, 1);
        data.subjects = {tivac::SubjectRecord{"a", {1, 2}, {1.0, 1.0}, {0.0, 1.0}},
                         tivac::SubjectRecord{"b", {1.5}, {2.0}, {2.0}}};
        tivac::validate_dataset(data);
        const auto out = tivac::quantile_transform(data);
        REQUIRE(out.subjects[0].y1[0] == out.subjects[0].y1[1]);
        REQUIRE(out.subjects[0].y1[0] < out.subjects[1].y1[0]);
    }

    SECTION("constant coordinate is an error") {
        auto data = tiny_dataset({{0.4, -1.2, 0.8}}, {0.0});
        for (auto& s : data.subjects) s.y2 = {1.0, 1.0};
        REQUIRE_THROWS_AS(tivac::quantile_transform(data), tivac::Error);
    }

    SECTION("rank preservation on random data") {
        auto data = tiny_dataset({{0.4, -1.2, 2.2, 0.9, -0.3}}, {0.0});
        tivac::RngStream stream(5);
        for (auto& s : data.subjects) {
            for (auto& y : s.y1) y = stream.normal();
            for (auto& y : s.y2) y = stream.normal();
        }
        const auto out = tivac::quantile_transform(data);
        std::vector<double> raw, transformed;
        for (int i = 0; i < data.n(); ++i) {
            const auto& before = data.subjects[static_cast<std::size_t>(i)];
            const auto& after = out.subjects[static_cast<std::size_t>(i)];
            raw.insert(raw.end(), before.y1.begin(), before.y1.end());
            transformed.insert(transformed.end(), after.y1.begin(), after.y1.end());
        }
        for (std::size_t a = 0; a < raw.size(); ++a) {
            for (std::size_t b = 0; b < raw.size(); ++b) {
                if (raw[a] == raw[b]) continue;
                REQUIRE(((raw[a] < raw[b]) == (transformed[a] < transformed[b])));
            }
        }
        double sum = 0.0;
        for (double z : transformed) sum += z;
        REQUIRE(std::abs(sum / static_cast<double>(transformed.size())) < 1e-10);
    }
}
