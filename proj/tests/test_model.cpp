#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>

#include "tivac/model.hpp"
#include "tivac/simulation.hpp"

using Catch::Approx;
using tivac::ThetaVector;

namespace {

tivac::ScenarioSpec small_scenario() {
    tivac::ScenarioSpec spec;
    spec.covariate_kind = tivac::CovariateKind::binary;
    spec.beta0_shape = tivac::ShapeKind::linear;
    spec.beta1_shape = tivac::ShapeKind::linear;
    spec.time_design = tivac::TimeDesign::custom(3, 10);
    spec.n = 100;
    spec.t_max = 60;
    spec.seed = 11;
    return spec;
}

tivac::FitConfig small_config() {
    tivac::FitConfig cfg;
    cfg.interior_knots = 6;
    cfg.seed = 5;
    return cfg;
}

}  // namespace

TEST_CASE("cross_validate selects smoothing parameters") {
    SECTION("single grid point returns immediately") {
        const auto sim = tivac::generate(small_scenario(), 0);
        tivac::FitConfig cfg = small_config();
        cfg.lambda_grid = {10.0};
        const auto cv = tivac::cross_validate(sim.data, cfg);
        REQUIRE(cv.lambdas_hat == std::vector<double>{10.0, 10.0});
        REQUIRE(cv.table.empty());
    }

    SECTION("constant true effect pushes lambda toward the grid maximum") {
        // eta constant in t: the smoothest fit generalizes best
        auto spec = small_scenario();
        tivac::TrueEta truth{[](double) { return 0.4; }, [](double) { return 0.6; }};
        const auto sim = tivac::generate_with_truth(spec, truth, 0);
        tivac::FitConfig cfg = small_config();
        const auto cv = tivac::cross_validate(sim.data, cfg);
        REQUIRE(cv.lambdas_hat[0] >= 1e3);
        REQUIRE(cv.lambdas_hat[1] >= 1e3);
    }

    SECTION("selected combination maximizes the held-out loglik over the table") {
        const auto sim = tivac::generate(small_scenario(), 1);
        tivac::FitConfig cfg = small_config();
        cfg.lambda_grid = {0.1, 10.0, 1000.0};  // small grid to keep the scan cheap
        const auto cv = tivac::cross_validate(sim.data, cfg);
        REQUIRE_FALSE(cv.table.empty());
        double selected_score = -std::numeric_limits<double>::infinity();
        for (const auto& rec : cv.table) {
            if (rec.lambdas == cv.lambdas_hat) selected_score = rec.heldout;
        }
        for (const auto& rec : cv.table) {
            REQUIRE(selected_score >= rec.heldout);
        }
    }

    SECTION("bad configs are rejected") {
        const auto sim = tivac::generate(small_scenario(), 0);
        tivac::FitConfig cfg = small_config();
        cfg.lambda_grid = {};
        REQUIRE_THROWS_AS(tivac::cross_validate(sim.data, cfg), tivac::Error);
        cfg.lambda_grid = {0.0, 1.0};
        REQUIRE_THROWS_AS(tivac::cross_validate(sim.data, cfg), tivac::Error);
        cfg = small_config();
        cfg.cv_folds = 1;
        REQUIRE_THROWS_AS(tivac::cross_validate(sim.data, cfg), tivac::Error);
        cfg.cv_folds = sim.data.n() + 1;
        REQUIRE_THROWS_AS(tivac::cross_validate(sim.data, cfg), tivac::Error);
    }
}

TEST_CASE("fit pipeline") {
    const auto sim = tivac::generate(small_scenario(), 2);
    const auto cfg = small_config();
    const auto model = tivac::fit(sim.data, cfg);

    SECTION("converged with lambdas from the grid") {
        REQUIRE(model.report.converged);
        for (double lambda : model.lambdas_hat) {
            bool in_grid = false;
            for (double g : cfg.lambda_grid) in_grid |= g == lambda;
            REQUIRE(in_grid);
        }
    }

    SECTION("recovers the true correlation curves (RMSE < 0.05 per group)") {
        const auto grid = tivac::default_grid(model, 120);
        for (double x : {0.0, 1.0}) {
            Eigen::VectorXd covs(2);
            covs << 1.0, x;
            const Eigen::VectorXd est = tivac::correlation_surface(model, covs, grid);
            double sum = 0.0;
            for (std::size_t i = 0; i < grid.size(); ++i) {
                const double diff =
                    est[static_cast<Eigen::Index>(i)] - sim.truth.rho(grid[i], x);
                sum += diff * diff;
            }
            const double rmse = std::sqrt(sum / static_cast<double>(grid.size()));
            INFO("group x = " << x);
            REQUIRE(rmse < 0.05);
        }
    }

    SECTION("deterministic: same seed reproduces theta bitwise") {
        const auto again = tivac::fit(sim.data, cfg);
        REQUIRE(again.theta_hat.size() == model.theta_hat.size());
        for (Eigen::Index i = 0; i < model.theta_hat.size(); ++i) {
            REQUIRE(again.theta_hat[i] == model.theta_hat[i]);
        }
        REQUIRE(again.lambdas_hat == model.lambdas_hat);
    }

    SECTION("thread count does not change the result") {
        auto cfg4 = cfg;
        cfg4.threads = 4;
        const auto threaded = tivac::fit(sim.data, cfg4);
        for (Eigen::Index i = 0; i < model.theta_hat.size(); ++i) {
            REQUIRE(threaded.theta_hat[i] == model.theta_hat[i]);
        }
    }

    SECTION("n <= p is rejected") {
        tivac::LongitudinalDataset bad;
        bad.covariate_names = {"a", "b"};
        bad.covariates = Eigen::MatrixXd::Ones(2, 2);
        bad.subjects = {tivac::SubjectRecord{"x", {1, 2}, {0.1, -0.2}, {0.0, 0.1}},
                        tivac::SubjectRecord{"y", {1, 2}, {0.3, 0.2}, {-0.1, 0.2}}};
        REQUIRE_THROWS_AS(tivac::validate_dataset(bad), tivac::Error);
    }
}

TEST_CASE("coefficient_curve and correlation_surface") {
    const auto sim = tivac::generate(small_scenario(), 3);
    auto model = tivac::fit(sim.data, small_config());
    const int q = model.spec.q();

    SECTION("zero coefficients give the zero curve and rho == 0") {
        auto zero = model;
        zero.theta_hat = ThetaVector::Zero(2 * q);
        const auto grid = tivac::default_grid(zero, 50);
        REQUIRE(tivac::coefficient_curve(zero, 0, grid).cwiseAbs().maxCoeff() == 0.0);
        Eigen::VectorXd x(2);
        x << 1.0, 0.7;
        REQUIRE(tivac::correlation_surface(zero, x, grid).cwiseAbs().maxCoeff() == 0.0);
    }

    SECTION("x = 0 gives rho identically 0") {
        const auto grid = tivac::default_grid(model, 50);
        const Eigen::VectorXd rho =
            tivac::correlation_surface(model, Eigen::VectorXd::Zero(2), grid);
        REQUIRE(rho.cwiseAbs().maxCoeff() == 0.0);
    }

    SECTION("single grid point equals the basis dot product") {
        const double t0 = 0.5 * (model.t_min() + model.t_max());
        const std::vector<double> grid = {t0};
        const Eigen::VectorXd curve = tivac::coefficient_curve(model, 1, grid);
        const Eigen::VectorXd basis = tivac::eval_basis(model.spec, t0);
        REQUIRE(curve[0] ==
                Approx(basis.dot(tivac::theta_block(model.theta_hat, q, 1))).margin(1e-14));
    }

    SECTION("constant theta block gives a constant curve (partition of unity)") {
        auto constant = model;
        constant.theta_hat = ThetaVector::Zero(2 * q);
        constant.theta_hat.segment(0, q).setConstant(0.8);
        const auto grid = tivac::default_grid(constant, 77);
        const Eigen::VectorXd curve = tivac::coefficient_curve(constant, 0, grid);
        for (Eigen::Index i = 0; i < curve.size(); ++i) {
            REQUIRE(curve[i] == Approx(0.8).margin(1e-12));
        }
        // p = 1, x = 1, constant c: rho == tanh(c / 2)
        Eigen::VectorXd x(2);
        x << 1.0, 0.0;
        const Eigen::VectorXd rho = tivac::correlation_surface(constant, x, grid);
        for (Eigen::Index i = 0; i < rho.size(); ++i) {
            REQUIRE(rho[i] == Approx(std::tanh(0.4)).margin(1e-12));
        }
    }

    SECTION("surface equals the pointwise composition and stays inside (-1, 1)") {
        const auto grid = tivac::default_grid(model, 64);
        Eigen::VectorXd x(2);
        x << 1.0, 0.35;
        const Eigen::VectorXd rho = tivac::correlation_surface(model, x, grid);
        const Eigen::VectorXd beta0 = tivac::coefficient_curve(model, 0, grid);
        const Eigen::VectorXd beta1 = tivac::coefficient_curve(model, 1, grid);
        for (Eigen::Index i = 0; i < rho.size(); ++i) {
            REQUIRE(std::abs(rho[i]) < 1.0);
            REQUIRE(rho[i] ==
                    Approx(tivac::rho_of_eta(beta0[i] + 0.35 * beta1[i])).margin(1e-12));
        }
    }

    SECTION("eta is linear in x: surface(a * x) = rho_of_eta(a * eta(x))") {
        const auto grid = tivac::default_grid(model, 40);
        Eigen::VectorXd x(2);
        x << 0.5, 1.2;
        const double a = -1.7;
        const Eigen::VectorXd surface_ax = tivac::correlation_surface(model, (a * x).eval(), grid);
        const Eigen::VectorXd beta0 = tivac::coefficient_curve(model, 0, grid);
        const Eigen::VectorXd beta1 = tivac::coefficient_curve(model, 1, grid);
        for (Eigen::Index i = 0; i < surface_ax.size(); ++i) {
            const double eta_x = 0.5 * beta0[i] + 1.2 * beta1[i];
            REQUIRE(surface_ax[i] == Approx(tivac::rho_of_eta(a * eta_x)).margin(1e-12));
        }
    }

    SECTION("out-of-range grid points are errors") {
        const std::vector<double> bad = {model.t_max() + 1.0};
        REQUIRE_THROWS_AS(tivac::coefficient_curve(model, 0, bad), tivac::Error);
        REQUIRE_THROWS_AS(tivac::coefficient_curve(model, 5, tivac::default_grid(model, 4)),
                          tivac::Error);
    }
}

TEST_CASE("model JSON round trip reproduces identical predictions") {
    namespace fs = std::filesystem;
    const auto sim = tivac::generate(small_scenario(), 4);
    const auto model = tivac::fit(sim.data, small_config());

    const auto path = (fs::temp_directory_path() / "tivac_model_test.json").string();
    tivac::save_model(model, path);
    const auto loaded = tivac::load_model(path);

    REQUIRE(loaded.covariate_names == model.covariate_names);
    REQUIRE(loaded.lambdas_hat == model.lambdas_hat);
    REQUIRE(loaded.spec.knots == model.spec.knots);
    REQUIRE(loaded.variances.sigma1_sq == model.variances.sigma1_sq);
    REQUIRE(loaded.seed == model.seed);
    REQUIRE(loaded.cv_table.size() == model.cv_table.size());

    const auto grid = tivac::default_grid(model, 33);
    Eigen::VectorXd x(2);
    x << 1.0, 0.42;
    const Eigen::VectorXd before = tivac::correlation_surface(model, x, grid);
    const Eigen::VectorXd after = tivac::correlation_surface(loaded, x, grid);
    for (Eigen::Index i = 0; i < before.size(); ++i) {
        REQUIRE(before[i] == after[i]);  // bitwise
    }

    SECTION("malformed model files raise errors") {
        const auto bad = (fs::temp_directory_path() / "tivac_model_bad.json").string();
        tivac::write_text_file(bad, "{not json");
        REQUIRE_THROWS_AS(tivac::load_model(bad), tivac::Error);
        tivac::write_text_file(bad, "{\"spec\": {\"order\": 4}}");
        REQUIRE_THROWS_AS(tivac::load_model(bad), tivac::Error);
    }
}
