#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "nlmodal/config.hpp"
#include "nlmodal/csv.hpp"
#include "nlmodal/experiments.hpp"
#include "nlmodal/io.hpp"
#include "support.hpp"

using namespace nlmodal;
namespace fs = std::filesystem;

namespace {

const char* kSmallVirtual = R"(
experiment: backbone-virtual
seed: 5
raw_traces: true
beam:
  boundary: cantilever
  EI: 12.49
  rhoA: 7.047
  L: 0.7
  modes: 3
  zeta: 0.01
  nonlinearity: {type: jenkins, x_c_over_L: 0.42857142857142855, kt_over_EI_L3: 27.47, muN: 1.0}
solver: {harmonics: 5, time_samples: 64, a_start: 1.0e-3, a_end: 0.1, initial_step: 0.05, max_step: 0.05}
sensors:
  positions_over_L: [0.3333333333333333, 0.6666666666666666, 1.0]
  reference: 1
  plot: 3
  sets: {S1: [3], S3: [1, 2, 3]}
schedule:
  levels_log: {first: 1.0e-4, last: 1.0e-3, count: 2}
  wait_periods: 150
  hold_periods: 60
rig: {noise_std: 1.0e-7}
)";

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("nlmodal_app_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

CsvTable small_table(double scale) {
    CsvTable t;
    t.add_column("a", "amplitude");
    t.add_column("D", "damping ratio");
    t.add_column("set", "sensor set");
    for (int k = 1; k <= 5; ++k)
        t.add_row({format_number(0.1 * k), format_number(scale * (0.01 + 0.002 * k)), "S1"});
    return t;
}

}  // namespace

TEST_CASE("config serialization round-trips and fixes the hash") {
    const ExperimentConfig c = parse_config(kSmallVirtual);
    const std::string text = serialize_config(c);
    const ExperimentConfig d = parse_config(text);
    CHECK(serialize_config(d) == text);
    CHECK(config_hash(d) == config_hash(c));
    CHECK(config_hash(c).size() == 16);
    CHECK(c.schedule.levels.size() == 2);
    CHECK(c.sensors.sets.size() == 2);

    ExperimentConfig e = c;
    e.seed = 6;
    CHECK(config_hash(e) != config_hash(c));
}

TEST_CASE("shipped configs load and validate") {
    for (const auto& entry : fs::directory_iterator(fs::path(NLMODAL_SOURCE_DIR) / "configs")) {
        if (entry.path().extension() != ".yaml") continue;
        CAPTURE(entry.path().string());
        const ExperimentConfig c = load_config(entry.path().string());
        if (c.experiment != Experiment::Identify && c.experiment != Experiment::RomPredict) CHECK_NOTHROW(c.validate());
    }
}

TEST_CASE("unknown keys and bad values are schema errors") {
    auto code_of = [](const std::string& yaml) {
        try {
            parse_config(yaml).validate();
        } catch (const Error& e) {
            return e.code();
        }
        return ErrorCode::Io;
    };
    CHECK(code_of(std::string(kSmallVirtual) + "bogus: 1\n") == ErrorCode::Schema);
    CHECK(code_of("experiment: nope\n") != ErrorCode::Io);
    std::string bad = kSmallVirtual;
    bad.replace(bad.find("count: 2"), 8, "count: 0");
    CHECK(code_of(bad) != ErrorCode::Io);
}

TEST_CASE("invalid config writes nothing") {
    ExperimentConfig c = parse_config(kSmallVirtual);
    c.schedule.levels.clear();
    const fs::path dir = scratch("invalid");
    CHECK_THROWS_AS(run_experiment(c, dir.string()), Error);
    CHECK_FALSE(fs::exists(dir));
}

TEST_CASE("numbers and tables round-trip through CSV") {
    for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0}) CHECK(std::stod(format_number(v)) == v);
    CHECK(format_number(std::numeric_limits<double>::quiet_NaN()) == "nan");
    CHECK(format_number(42LL) == "42");

    CsvTable t = small_table(1.0);
    t.comments.push_back("plot_scale=0.7");
    const fs::path p = fs::temp_directory_path() / "nlmodal_csv_test.csv";
    write_csv(p.string(), t, "abc123");
    const CsvTable r = read_csv(p.string());
    CHECK(r.meta("config_hash") == "abc123");
    CHECK(r.meta("plot_scale") == "0.7");
    CHECK(r.columns == t.columns);
    CHECK(r.descriptions == t.descriptions);
    CHECK(r.rows == t.rows);
    CHECK(r.numeric("D")[4] == doctest::Approx(0.02));
    CHECK(slurp(p).rfind("# config_hash=abc123", 0) == 0);
    fs::remove(p);
}

TEST_CASE("compare passes on identical tables and catches a 10% damping offset") {
    const CsvTable ref = small_table(1.0);
    CompareSpec spec;
    spec.default_tolerance = 1e-12;
    CHECK(compare_tables(ref, ref, spec).pass);

    spec.tolerances = parse_tolerances("D=0.05");
    const auto rep = compare_tables(ref, small_table(1.1), spec);
    CHECK_FALSE(rep.pass);
    for (const auto& c : rep.columns)
        if (c.column == "D") CHECK(c.max_rel_error == doctest::Approx(0.1).epsilon(1e-9));
    CHECK(compare_tables(ref, small_table(1.04), spec).pass);

    CsvTable other = ref;
    other.rows[2][2] = "S2";
    CHECK(compare_tables(ref, other, spec).pass);  // only the listed columns are compared
    CHECK_FALSE(compare_tables(ref, other, CompareSpec{"", {}, 0.2}).pass);
}

TEST_CASE("keyed compare interpolates the reference") {
    CsvTable ref, cand;
    ref.add_column("a", "");
    ref.add_column("w", "");
    cand.add_column("a", "");
    cand.add_column("w", "");
    for (int k = 0; k <= 10; ++k) ref.add_row({format_number(0.1 * k), format_number(2.0 + 0.1 * k)});
    for (double a : {0.05, 0.55, 0.95, 1.5}) cand.add_row({format_number(a), format_number(2.0 + a)});
    CompareSpec spec;
    spec.key = "a";
    spec.default_tolerance = 1e-12;
    const auto rep = compare_tables(ref, cand, spec);
    CHECK(rep.pass);
    CHECK(rep.rows_compared == 3);
    CHECK(rep.rows_skipped == 1);
}

TEST_CASE("parallel_for covers every index and rethrows") {
    std::vector<int> hits(100, 0);
    parallel_for(100, 3, [&](int i) { hits[static_cast<std::size_t>(i)] += 1; });
    for (int h : hits) CHECK(h == 1);
    CHECK_THROWS_AS(parallel_for(10, 2, [](int i) { if (i == 7) fail(ErrorCode::NonFinite, "boom"); }), Error);
}

TEST_CASE("virtual backbone run is deterministic across thread counts") {
    const ExperimentConfig c = parse_config(kSmallVirtual);
    const fs::path d1 = scratch("det1"), d2 = scratch("det2");
    const RunManifest m1 = run_experiment(c, d1.string(), 1);
    const RunManifest m2 = run_experiment(c, d2.string(), 2);
    REQUIRE(m1.ok());
    REQUIRE(m2.ok());
    CHECK(m1.config_hash == config_hash(c));

    const auto j = nlohmann::json::parse(slurp(d1 / "manifest.json"));
    CHECK(j["config_hash"] == m1.config_hash);
    CHECK(j["status"] == "ok");
    CHECK(j["seed"] == 5);
    REQUIRE(!m1.artifacts.empty());
    REQUIRE(!m1.raw_traces.empty());
    for (const auto& a : m1.artifacts) {
        CAPTURE(a.file);
        REQUIRE(fs::exists(d1 / a.file));
        CHECK(slurp(d1 / a.file) == slurp(d2 / a.file));
        if (fs::path(a.file).extension() == ".csv") {
            const CsvTable t = read_csv((d1 / a.file).string());
            CHECK(t.meta("config_hash") == m1.config_hash);
            CHECK(static_cast<long long>(t.rows.size()) == a.rows);
            CHECK(t.descriptions.size() == t.columns.size());
        }
    }
    for (const auto& r : m1.raw_traces) {
        const RawTrace t = read_raw_trace((d1 / r.file).string());
        CHECK(t.frames.cols() == r.channels);
        CHECK(t.frames.rows() == r.frames);
        CHECK(t.sample_rate == r.sample_rate);
        CHECK(slurp(d1 / r.file) == slurp(d2 / r.file));
    }

    // the stored record reproduces the identification
    const TestRecord rec = test_record_from_table(read_csv((d1 / "test_record.csv").string()));
    CHECK(rec.levels.size() == 2);
    const IdentifiedBackbone ib = identified_from_table(read_csv((d1 / "identified_S3_model-based.csv").string()));
    REQUIRE(!ib.points.empty());
    CHECK(ib.sensor_positions.size() == 3);
    fs::remove_all(d1);
    fs::remove_all(d2);
}

TEST_CASE("backbone tables round-trip") {
    const HbmProblem p = test::friction_problem(3);
    const auto ref = continue_backbone(p);
    const CsvTable t = backbone_table(ref, p, {0.7, 0.7, "amp_plot"});
    const fs::path path = fs::temp_directory_path() / "nlmodal_bb.csv";
    write_csv(path.string(), t, "h");
    const BackboneReference back = backbone_from_table(read_csv(path.string()));
    REQUIRE(back.points.size() == ref.points.size());
    for (std::size_t k = 0; k < ref.points.size(); ++k) {
        CHECK(back.points[k].a == ref.points[k].a);
        CHECK(back.points[k].omega == ref.points[k].omega);
        CHECK(back.points[k].D == ref.points[k].D);
        CHECK((back.points[k].vhat - ref.points[k].vhat).norm() == 0.0);
    }
    fs::remove(path);
}
