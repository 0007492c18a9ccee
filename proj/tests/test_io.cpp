#include <catch2/catch_amalgamated.hpp>

#include <cbmd/core.hpp>
#include <cbmd/distribution.hpp>
#include <cbmd/io.hpp>
#include <cbmd/mixture.hpp>
#include <cbmd/synth.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

using namespace cbmd;
using Catch::Approx;
using Catch::Matchers::ContainsSubstring;

namespace {

namespace fs = std::filesystem;

std::string temp_path(const std::string& name) {
    static const fs::path dir = [] {
        fs::path p = fs::temp_directory_path() / "cbmd_io_tests";
        fs::create_directories(p);
        return p;
    }();
    return (dir / name).string();
}

void write_text(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    out << content;
}

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

MixtureModel fixture_mixture() {
    CbmdParams a;
    a.marginals = {UnivariateCircular::von_mises(1.0, 2.0),
                   UnivariateCircular::wrapped_cauchy(2.0, 0.5)};
    a.circula = CirculaParams::wrapped_cauchy({0.3, 0.6}, {1, -1});
    CbmdParams b;
    b.marginals = {UnivariateCircular::von_mises(3.0, 4.5),
                   UnivariateCircular::von_mises(0.5, 1.0)};
    b.circula = CirculaParams::uniform(2);
    MixtureModel m;
    m.weights = {0.25, 0.75};
    m.components = {a, b};
    m.fit_meta.message_length_bits = 123.5;
    return m;
}

const char* fixture_text =
    "cbmd_model,1\n"
    "dim,2\n"
    "components,2\n"
    "component,0,0.25\n"
    "marginal,0,0,von_mises,1,2\n"
    "marginal,0,1,wrapped_cauchy,2,0.5\n"
    "binding,0,wrapped_cauchy,1,-1\n"
    "binding_conc,0,0.3,0.6\n"
    "component,1,0.75\n"
    "marginal,1,0,von_mises,3,4.5\n"
    "marginal,1,1,von_mises,0.5,1\n"
    "binding,1,uniform,1,1\n"
    "message_length_bits,123.5\n"
    "seed,99\n"
    "tool_version,cbmd 1.0.0\n"
    "end\n";

std::string patched(const std::string& from, const std::string& to) {
    std::string s = fixture_text;
    auto pos = s.find(from);
    REQUIRE(pos != std::string::npos);
    s.replace(pos, from.size(), to);
    return s;
}

} // namespace

TEST_CASE("dataset round trip is bit exact") {
    RandomSource rng(1);
    Dataset data(37, 3);
    for (auto& v : data.values) v = rng.uniform(0.0, two_pi);
    data.weights.resize(37);
    for (auto& w : data.weights) w = rng.uniform(0.1, 5.0);

    auto path = temp_path("roundtrip.csv");
    save_dataset(path, data);
    auto back = load_dataset(path);
    REQUIRE(back.n == data.n);
    REQUIRE(back.d == data.d);
    CHECK(back.values == data.values);
    CHECK(back.weights == data.weights);
}

TEST_CASE("dataset without weights stays weightless") {
    Dataset data(3, 2);
    data.values = {0.1, 0.2, 1.5, 2.5, 3.5, 4.5};
    auto path = temp_path("noweight.csv");
    save_dataset(path, data);
    auto back = load_dataset(path);
    CHECK(back.weights.empty());
    CHECK(back.values == data.values);
    std::string text = read_text(path);
    CHECK(text.find("weight") == std::string::npos);
}

TEST_CASE("degree input is converted and normalized") {
    auto path = temp_path("degrees.csv");
    write_text(path, "unit,degrees\ncolumns,alpha\n180\n90\n-90\n720\n");
    auto data = load_dataset(path);
    REQUIRE(data.n == 4);
    CHECK(data.values[0] == Approx(pi));
    CHECK(data.values[1] == Approx(pi / 2.0));
    CHECK(data.values[2] == Approx(3.0 * pi / 2.0));
    CHECK(data.values[3] == Approx(0.0).margin(1e-12));
}

TEST_CASE("dataset loader reports line numbers on malformed input") {
    auto p1 = temp_path("bad_unit.csv");
    write_text(p1, "unit,furlongs\ncolumns,a\n0.5\n");
    CHECK_THROWS_WITH(load_dataset(p1), ContainsSubstring(":1:"));

    auto p2 = temp_path("bad_cols.csv");
    write_text(p2, "unit,radians\nheaders,a\n0.5\n");
    CHECK_THROWS_WITH(load_dataset(p2), ContainsSubstring(":2:"));

    auto p3 = temp_path("bad_fieldcount.csv");
    write_text(p3, "unit,radians\ncolumns,a,b\n0.5,0.6\n0.7\n");
    CHECK_THROWS_WITH(load_dataset(p3),
                      ContainsSubstring(":4: expected 2 fields, got 1"));

    auto p4 = temp_path("bad_number.csv");
    write_text(p4, "unit,radians\ncolumns,a\n0.5\noops\n");
    CHECK_THROWS_AS(load_dataset(p4), data_error);

    auto p5 = temp_path("bad_weight.csv");
    write_text(p5, "unit,radians\ncolumns,a,weight\n0.5,-1\n");
    CHECK_THROWS_WITH(load_dataset(p5), ContainsSubstring("invalid weight"));

    auto p6 = temp_path("no_cols.csv");
    write_text(p6, "unit,radians\ncolumns,weight\n1.0\n");
    CHECK_THROWS_WITH(load_dataset(p6), ContainsSubstring("no angle columns"));
}

TEST_CASE("expected dimension is enforced") {
    auto path = temp_path("dim.csv");
    write_text(path, "unit,radians\ncolumns,a,b\n0.5,0.6\n");
    DatasetReadOptions opt;
    opt.expect_dim = 3;
    CHECK_THROWS_WITH(load_dataset(path, opt),
                      ContainsSubstring("expected 3 angle columns"));
    opt.expect_dim = 2;
    CHECK_NOTHROW(load_dataset(path, opt));
}

TEST_CASE("model files round trip exactly") {
    auto m = fixture_mixture();
    auto p1 = temp_path("model1.txt");
    auto p2 = temp_path("model2.txt");
    save_model(p1, m, 99);
    auto mf = load_model_file(p1);
    CHECK(mf.seed == 99);
    CHECK(mf.model.fit_meta.message_length_bits == 123.5);
    save_model(p2, mf);
    CHECK(read_text(p1) == read_text(p2));

    // densities are preserved exactly, not just approximately
    RandomSource rng(5);
    for (int i = 0; i < 200; ++i) {
        std::vector<double> theta{rng.uniform(0.0, two_pi), rng.uniform(0.0, two_pi)};
        for (std::size_t k = 0; k < m.size(); ++k) {
            CHECK(cbmd_logpdf(m.components[k], theta) ==
                  cbmd_logpdf(mf.model.components[k], theta));
        }
    }
}

TEST_CASE("hand written model fixture parses") {
    auto path = temp_path("fixture.txt");
    write_text(path, fixture_text);
    auto mf = load_model_file(path);
    REQUIRE(mf.model.size() == 2);
    CHECK(mf.model.weights[0] == 0.25);
    CHECK(mf.model.weights[1] == 0.75);
    CHECK(mf.model.components[0].marginals[0].family == MarginalFamily::von_mises);
    CHECK(mf.model.components[0].marginals[1].family == MarginalFamily::wrapped_cauchy);
    CHECK(mf.model.components[0].marginals[1].conc == 0.5);
    CHECK(mf.model.components[0].circula.family == BindingFamily::wrapped_cauchy);
    CHECK(mf.model.components[0].circula.q == std::vector<int>{1, -1});
    CHECK(mf.model.components[0].circula.conc == std::vector<double>{0.3, 0.6});
    CHECK(mf.model.components[1].circula.family == BindingFamily::uniform);
    CHECK(mf.seed == 99);
    CHECK(mf.version == "cbmd 1.0.0");
}

TEST_CASE("model loader rejects malformed files") {
    auto path = temp_path("bad_model.txt");

    write_text(path, patched("cbmd_model,1", "model,1"));
    CHECK_THROWS_WITH(load_model_file(path), ContainsSubstring("cbmd_model"));

    write_text(path, patched("cbmd_model,1", "cbmd_model,2"));
    CHECK_THROWS_WITH(load_model_file(path), ContainsSubstring("version"));

    write_text(path, patched("dim,2\ncomponents,2", "components,2\ndim,2"));
    CHECK_THROWS_AS(load_model_file(path), data_error);

    write_text(path, patched("component,1,0.75", "component,5,0.75"));
    CHECK_THROWS_WITH(load_model_file(path), ContainsSubstring("out of range"));

    write_text(path, patched("binding,0,wrapped_cauchy,1,-1",
                             "binding,0,wrapped_cauchy,1,-2"));
    CHECK_THROWS_WITH(load_model_file(path), ContainsSubstring("sign"));

    write_text(path, patched("seed,99", "surprise,99\nseed,99"));
    CHECK_THROWS_WITH(load_model_file(path), ContainsSubstring("unknown field"));

    write_text(path, std::string(fixture_text) + "extra\n");
    CHECK_THROWS_WITH(load_model_file(path), ContainsSubstring("after 'end'"));

    write_text(path, patched("end\n", ""));
    CHECK_THROWS_WITH(load_model_file(path), ContainsSubstring("missing 'end'"));

    write_text(path, patched("component,0,0.25", "component,0,0.30"));
    CHECK_THROWS_WITH(load_model_file(path), ContainsSubstring("sum to"));

    write_text(path, std::string(fixture_text));
    write_text(path, patched("binding,1,uniform,1,1",
                             "binding,1,uniform,1,1\nbinding_conc,1,0.5,0.5"));
    CHECK_THROWS_WITH(load_model_file(path),
                      ContainsSubstring("not allowed for uniform"));

    write_text(path, patched("binding_conc,0,0.3,0.6\n", ""));
    CHECK_THROWS_WITH(load_model_file(path), ContainsSubstring("binding_conc"));

    write_text(path, patched("marginal,0,0,von_mises,1,2",
                             "marginal,0,0,von_mises,1,800"));
    CHECK_THROWS_WITH(load_model_file(path), ContainsSubstring("marginal"));
}

TEST_CASE("slightly off weight sums are renormalized") {
    auto path = temp_path("renorm.txt");
    write_text(path, patched("component,0,0.25", "component,0,0.2500000003"));
    auto mf = load_model_file(path);
    CHECK(deterministic_sum(mf.model.weights) == Approx(1.0).margin(1e-12));
}

TEST_CASE("atomic writes replace content and leave no temp files") {
    auto path = temp_path("atomic.csv");
    Dataset d1(1, 1);
    d1.values = {0.5};
    Dataset d2(1, 1);
    d2.values = {1.5};
    save_dataset(path, d1);
    save_dataset(path, d2);
    auto back = load_dataset(path);
    CHECK(back.values[0] == Approx(1.5));
    CHECK(!fs::exists(path + ".tmp"));
}

TEST_CASE("benchmark reports serialize to csv and json") {
    SynthSpec spec;
    spec.dim = 2;
    spec.n_samples = 200;
    spec.n_repeats = 2;
    spec.seed = 9;
    auto rep = run_rank1_benchmark(spec);

    auto csv = temp_path("bench.csv");
    save_bench_csv(csv, rep);
    std::string text = read_text(csv);
    std::istringstream lines(text);
    std::string line;
    std::getline(lines, line);
    CHECK(line == "repeat,method,loglik,wall_seconds");
    std::size_t rows = 0;
    while (std::getline(lines, line))
        if (!line.empty()) ++rows;
    CHECK(rows == rep.records.size());

    auto json = temp_path("bench.json");
    save_bench_json(json, rep);
    std::string jtext = read_text(json);
    CHECK(jtext.find("\"dim\":2") != std::string::npos);
    CHECK(jtext.find("\"n_repeats\":2") != std::string::npos);
    CHECK(jtext.find("mean_loglik") != std::string::npos);
    CHECK(jtext.find("repeats_completed") != std::string::npos);
}

TEST_CASE("pairwise grids integrate the remaining coordinate away") {
    CbmdParams p;
    p.marginals = {UnivariateCircular::von_mises(0.5, 2.0),
                   UnivariateCircular::wrapped_cauchy(2.0, 0.5),
                   UnivariateCircular::von_mises(4.0, 1.2)};
    p.circula = CirculaParams::wrapped_cauchy({0.4, 0.6, 0.5}, {1, -1, 1});
    MixtureModel m;
    m.weights = {1.0};
    m.components = {p};

    const std::size_t res = 16;
    auto grid = mixture_grid2(m, 0, 2, res);
    REQUIRE(grid.size() == res * res);
    std::vector<std::size_t> keep{0, 2};
    auto marg = cbmd_marginal(p, keep);
    auto direct = grid_density2(marg, res);
    for (std::size_t i = 0; i < grid.size(); ++i)
        CHECK(grid[i] == Approx(direct[i]).epsilon(1e-14));

    CHECK_THROWS_AS(mixture_grid2(m, 1, 1, res), data_error);
    CHECK_THROWS_AS(mixture_grid2(m, 0, 3, res), data_error);
    CHECK_THROWS_AS(mixture_grid2(m, 0, 1, 1), data_error);
}

TEST_CASE("grid csv lists cell centers with densities") {
    auto m = fixture_mixture();
    auto path = temp_path("grid.csv");
    save_grid_csv(path, m, 0, 1, 4);
    std::string text = read_text(path);
    std::istringstream lines(text);
    std::string line;
    std::getline(lines, line);
    CHECK(line == "theta_0,theta_1,density");
    std::size_t rows = 0;
    double first_a = -1.0, first_b = -1.0;
    while (std::getline(lines, line)) {
        if (line.empty()) continue;
        if (rows == 0) {
            auto c1 = line.find(',');
            auto c2 = line.find(',', c1 + 1);
            first_a = std::stod(line.substr(0, c1));
            first_b = std::stod(line.substr(c1 + 1, c2 - c1 - 1));
        }
        ++rows;
    }
    CHECK(rows == 16);
    double h = two_pi / 4.0;
    CHECK(first_a == Approx(0.5 * h));
    CHECK(first_b == Approx(0.5 * h));
}

TEST_CASE("fitted pipeline models survive a save and reload") {
    RandomSource rng(21);
    CbmdParams truth;
    truth.marginals = {UnivariateCircular::von_mises(1.0, 6.0),
                       UnivariateCircular::von_mises(4.0, 6.0)};
    truth.circula = CirculaParams::wrapped_cauchy({0.5, 0.6}, {1, 1});
    auto data = cbmd_sample(truth, rng, 300);
    MmlConfig cfg;
    cfg.k_min = 1;
    cfg.k_max = 2;
    cfg.seed = 3;
    auto fit = mml_em_fit(data, cfg);

    auto p1 = temp_path("fit1.txt");
    auto p2 = temp_path("fit2.txt");
    save_model(p1, fit, cfg.seed);
    auto back = load_model_file(p1);
    save_model(p2, back);
    CHECK(read_text(p1) == read_text(p2));
    CHECK(back.model.fit_meta.message_length_bits ==
          fit.fit_meta.message_length_bits);
}
