#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "locsim/engine.hpp"
#include "locsim/io_util.hpp"
#include "locsim/scenario.hpp"
#include "locsim/topology.hpp"

namespace locsim {
namespace {

Scenario parse(const std::string& text) {
    std::istringstream in(text);
    return parse_scenario(in);
}

std::string error_for(const std::string& text) {
    std::istringstream in(text);
    try {
        parse_scenario(in);
    } catch (const ScenarioError& e) {
        return e.what();
    }
    ADD_FAILURE() << "accepted:\n" << text;
    return {};
}

TEST(ScenarioFiles, AFullFileParsesEveryField) {
    const Scenario sc = parse(
        "# exercises every section\n"
        "[topology]\n"
        "source = canonical\n"
        "cell_size = 50\n"
        "[mobility]\n"
        "source = model\n"
        "model = gauss-markov\n"
        "gm_alpha = 0.5\n"
        "step_time = 2\n"
        "min_speed = 0.5\n"
        "max_speed = 4\n"
        "pause_time = 1.5\n"
        "[traffic]\n"
        "source = poisson\n"
        "cmr = 2.5\n"
        "preferred_set_size = 7\n"
        "preferred_prob = 0.6\n"
        "[scheme]\n"
        "scheme = ws-hier\n"
        "ws.ewma_alpha = 0.25\n"
        "ws.u_cost_mode = announce_only\n"
        "ws.strict_boundary = false\n"
        "[run]\n"
        "seed = 99\n"
        "users = 12\n"
        "horizon_events = 5000\n"
        "output = out.csv\n");
    EXPECT_EQ(sc.topology_source, "canonical");
    EXPECT_DOUBLE_EQ(sc.cell_size, 50.0);
    EXPECT_EQ(sc.mobility, MobilitySource::model);
    EXPECT_EQ(sc.model, MobilityModel::GaussMarkov);
    EXPECT_DOUBLE_EQ(sc.params.gm_alpha, 0.5);
    EXPECT_DOUBLE_EQ(sc.params.step_time, 2.0);
    EXPECT_DOUBLE_EQ(sc.params.min_speed, 0.5);
    EXPECT_DOUBLE_EQ(sc.params.max_speed, 4.0);
    EXPECT_DOUBLE_EQ(sc.params.pause_time, 1.5);
    EXPECT_EQ(sc.traffic, TrafficSource::poisson);
    EXPECT_DOUBLE_EQ(sc.calls.cmr, 2.5);
    EXPECT_EQ(sc.calls.preferred_set_size, 7);
    EXPECT_DOUBLE_EQ(sc.calls.preferred_prob, 0.6);
    EXPECT_EQ(sc.scheme, SchemeKind::ws_hier);
    EXPECT_DOUBLE_EQ(sc.ws.ewma_alpha, 0.25);
    EXPECT_EQ(sc.ws.u_cost_mode, WsConfig::UCostMode::announce_only);
    EXPECT_FALSE(sc.ws.strict_boundary);
    EXPECT_TRUE(sc.seed_set);
    EXPECT_EQ(sc.seed, 99u);
    EXPECT_EQ(sc.users, 12);
    EXPECT_EQ(sc.horizon_events, 5000);
    EXPECT_EQ(sc.output, "out.csv");
    EXPECT_NO_THROW(validate_scenario(sc));
}

TEST(ScenarioFiles, DefaultsHoldWhenOnlyTheEssentialsAreGiven) {
    const Scenario sc = parse(
        "[run]\n"
        "seed = 1\n"
        "users = 4\n");
    EXPECT_EQ(sc.topology_source, "canonical");
    EXPECT_DOUBLE_EQ(sc.cell_size, 100.0);
    EXPECT_EQ(sc.mobility, MobilitySource::matrix_walk);
    EXPECT_DOUBLE_EQ(sc.move_rate, 1.0);
    EXPECT_EQ(sc.traffic, TrafficSource::poisson);
    EXPECT_DOUBLE_EQ(sc.calls.cmr, 1.0);
    EXPECT_EQ(sc.scheme, SchemeKind::hlr);
    EXPECT_DOUBLE_EQ(sc.ws.ewma_alpha, 0.0);
    EXPECT_TRUE(sc.ws.strict_boundary);
    EXPECT_EQ(sc.horizon_events, 100000);
    EXPECT_DOUBLE_EQ(sc.horizon_seconds, 0.0);
    EXPECT_NO_THROW(validate_scenario(sc));
}

TEST(ScenarioFiles, CommentsBlankLinesAndCarriageReturnsAreTolerated) {
    const Scenario sc = parse(
        "\n"
        "# leading comment\r\n"
        "[run]\r\n"
        "  seed   =  7  \r\n"
        "\n"
        "users = 2\n"
        "# trailing comment\n");
    EXPECT_EQ(sc.seed, 7u);
    EXPECT_EQ(sc.users, 2);
}

TEST(ScenarioFiles, ProblemsAreReportedWithTheirLineNumber) {
    EXPECT_NE(error_for("[run]\nseed = 1\nbogus = 2\n").find("line 3"), std::string::npos);
    EXPECT_NE(error_for("[nowhere]\n").find("line 1"), std::string::npos);
    EXPECT_NE(error_for("[run]\nseed 1\n").find("line 2"), std::string::npos);
    EXPECT_NE(error_for("seed = 1\n").find("before any [section]"), std::string::npos);
    EXPECT_NE(error_for("[run\nseed = 1\n").find("unterminated"), std::string::npos);
    EXPECT_NE(error_for("[mobility]\nflavour = odd\n").find("unknown mobility key"),
              std::string::npos);
}

TEST(ScenarioFiles, MalformedValuesAreRejected) {
    EXPECT_NE(error_for("[run]\nseed = soon\n").find("expects a number"), std::string::npos);
    EXPECT_NE(error_for("[run]\nusers = 1.5\n").find("expects an integer"), std::string::npos);
    EXPECT_NE(error_for("[run]\nseed = -4\n").find("non-negative"), std::string::npos);
    EXPECT_NE(error_for("[scheme]\nws.strict_boundary = maybe\n").find("true or false"),
              std::string::npos);
    EXPECT_NE(error_for("[scheme]\nscheme = vlr\n").find("unknown scheme"), std::string::npos);
    EXPECT_NE(error_for("[scheme]\nws.u_cost_mode = half\n").find("unknown ws.u_cost_mode"),
              std::string::npos);
    EXPECT_NE(error_for("[mobility]\nmodel = brownian\n").find("unknown mobility model"),
              std::string::npos);
    EXPECT_NE(error_for("[mobility]\nsource = teleport\n").find("unknown mobility source"),
              std::string::npos);
    EXPECT_NE(error_for("[traffic]\nsource = flood\n").find("unknown traffic source"),
              std::string::npos);
}

TEST(ScenarioFiles, TheAreaComesFromTheGridSoAreaKeysAreRejected) {
    EXPECT_NE(error_for("[mobility]\narea_width = 500\n").find("derived from the topology"),
              std::string::npos);
    EXPECT_NE(error_for("[mobility]\narea_height = 400\n").find("derived from the topology"),
              std::string::npos);
}

TEST(ScenarioFiles, SettingBothHorizonsIsAnError) {
    const std::string text =
        "[run]\n"
        "seed = 1\n"
        "users = 4\n"
        "horizon_events = 100\n"
        "horizon_seconds = 10\n";
    EXPECT_NE(error_for(text).find("not both"), std::string::npos);
}

TEST(ScenarioFiles, ValidationCatchesSemanticGaps) {
    Scenario sc = parse("[run]\nusers = 4\n");
    EXPECT_THROW(validate_scenario(sc), ScenarioError);  // no seed

    sc = parse("[run]\nseed = 1\nusers = 1\n");
    EXPECT_THROW(validate_scenario(sc), ScenarioError);  // calls need peers

    sc = parse("[run]\nseed = 1\n");
    EXPECT_THROW(validate_scenario(sc), ScenarioError);  // no users

    sc = parse("[mobility]\nmove_rate = 0\n[run]\nseed = 1\nusers = 4\n");
    EXPECT_THROW(validate_scenario(sc), ScenarioError);  // stalled walk

    sc = parse("[mobility]\nsource = zone-trace\n[run]\nseed = 1\nusers = 4\n");
    EXPECT_THROW(validate_scenario(sc), ScenarioError);  // no trace path

    sc = parse("[traffic]\nsource = call-trace\n[run]\nseed = 1\nusers = 4\n");
    EXPECT_THROW(validate_scenario(sc), ScenarioError);  // no trace path

    sc = parse("[traffic]\npreferred_prob = 1.5\n[run]\nseed = 1\nusers = 4\n");
    EXPECT_THROW(validate_scenario(sc), std::invalid_argument);

    sc = parse("[scheme]\nws.ewma_alpha = -0.5\n[run]\nseed = 1\nusers = 4\n");
    EXPECT_THROW(validate_scenario(sc), ScenarioError);

    sc = parse("[run]\nseed = 1\nusers = 4\nhorizon_events = -5\n");
    EXPECT_THROW(validate_scenario(sc), ScenarioError);
}

TEST(ScenarioFiles, MissingFilesSurfaceAsScenarioErrors) {
    EXPECT_THROW(load_scenario_file("/nonexistent/path.scn"), ScenarioError);
    Scenario sc;
    sc.topology_source = "/nonexistent/topo.txt";
    EXPECT_THROW(load_scenario_topology(sc), ScenarioError);
}

TEST(ScenarioFiles, TopologiesLoadFromTheFixtureOrFromAFile) {
    Scenario sc = parse("[run]\nseed = 1\nusers = 4\n");
    const Topology canon = load_scenario_topology(sc);
    EXPECT_EQ(canon.tree.node_count(), 34);

    const auto path = std::filesystem::temp_directory_path() / "locsim-formats-topo.txt";
    save_topology_file(canon, path.string());
    sc.topology_source = path.string();
    sc.cell_size = canon.grid.cell_size;
    const Topology loaded = load_scenario_topology(sc);
    std::filesystem::remove(path);
    EXPECT_EQ(loaded.tree.node_count(), canon.tree.node_count());
    EXPECT_EQ(loaded.grid.rows, canon.grid.rows);
    EXPECT_EQ(loaded.grid.cols, canon.grid.cols);
    const auto a = loaded.tree.find("a");
    const auto e = loaded.tree.find("e");
    ASSERT_TRUE(a && e);
    EXPECT_DOUBLE_EQ(loaded.tree.cost(*a, *e), 9.0);
}

TEST(AtomicWrites, ContentLandsCompletelyAndTheScratchFileIsGone) {
    const auto path = std::filesystem::temp_directory_path() / "locsim-formats-atomic.txt";
    atomic_write_file(path.string(), "first\n");
    EXPECT_EQ(read_file(path.string()), "first\n");
    atomic_write_file(path.string(), "second, longer body\n");
    EXPECT_EQ(read_file(path.string()), "second, longer body\n");
    EXPECT_FALSE(std::filesystem::exists(path.string() + ".tmp"));
    std::filesystem::remove(path);
}

TEST(AtomicWrites, AnUnwritableTargetThrowsAndLeavesNothingBehind) {
    const std::string path = "/nonexistent-dir/out.txt";
    EXPECT_THROW(atomic_write_file(path, "x"), std::runtime_error);
    EXPECT_FALSE(std::filesystem::exists(path));
    EXPECT_FALSE(std::filesystem::exists(path + ".tmp"));
    EXPECT_THROW(read_file(path), std::runtime_error);
}

TEST(ResultsPrecision, DoublesSurviveTheCsvRoundTripBitForBit) {
    std::vector<SweepCell> cells(1);
    cells[0].scheme = SchemeKind::ws_hlr;
    cells[0].cmr = 1.0 / 3.0;
    cells[0].seed = 3;
    MessageLog log;
    log.entries.push_back({MessageKind::lookup, NodeId{0}, NodeId{1}, 2.0 / 7.0, 2, 0});
    log.lookupsTotal = 3;
    log.lookupsLocal = 1;
    cells[0].ledger.add(log);
    std::ostringstream out;
    write_ledger_csv(out, cells);

    std::istringstream lines(out.str());
    std::string header, row;
    ASSERT_TRUE(std::getline(lines, header));
    ASSERT_TRUE(std::getline(lines, row));
    std::vector<std::string> fields;
    std::string field;
    std::istringstream split(row);
    while (std::getline(split, field, ',')) fields.push_back(field);
    ASSERT_GE(fields.size(), 15u);
    EXPECT_EQ(fields[0], "ws-hlr");
    EXPECT_EQ(std::stod(fields[1]), 1.0 / 3.0);
    EXPECT_EQ(std::stod(fields[10]), 2.0 / 7.0);
    EXPECT_EQ(std::stod(fields[13]), (2.0 / 7.0) / 3.0);
    EXPECT_EQ(std::stod(fields[14]), 1.0 / 3.0);
}

}  // namespace
}  // namespace locsim
