// locsim: scenario-driven location-management simulator front end.
//
//   locsim generate-mobility --model random-waypoint --nodes 10 --seed 7 --out t.trace
//   locsim validate --scenario scenarios/canonical-matrix.scn
//   locsim simulate --scenario scenarios/canonical-matrix.scn --out run.csv
//   locsim sweep --scenario ... --cmr 0.25,0.5,1,2,4,8 --schemes hlr,ws-hlr,hier,ws-hier
//   locsim report run-seed1.csv run-seed2.csv --out summary.csv
//
// Exit codes: 0 success, 1 failed validation report, 2 bad arguments or
// config, 3 consistency abort during a run.

#include <cmath>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "locsim/engine.hpp"
#include "locsim/io_util.hpp"
#include "locsim/mobility.hpp"
#include "locsim/scenario.hpp"
#include "locsim/topology.hpp"

namespace {

using namespace locsim;

std::vector<std::string> split_list(const std::string& csv) {
    std::vector<std::string> out;
    std::istringstream in(csv);
    std::string item;
    while (std::getline(in, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

// Empty path means stdout.
void emit(const std::string& path, const std::string& content, const std::string& what) {
    if (path.empty()) {
        std::cout << content;
        return;
    }
    atomic_write_file(path, content);
    std::cout << "wrote " << path << " (" << what << ")\n";
}

struct GenerateArgs {
    std::string model_name, topology = "canonical", out;
    int nodes = 0;
    std::uint64_t seed = 0;
    double duration = 300.0, cell_size = 100.0;
    ModelParams params;
};

Topology load_topology_arg(const std::string& source, double cell_size) {
    Scenario sc;
    sc.topology_source = source;
    sc.cell_size = cell_size;
    return load_scenario_topology(sc);
}

int cmd_generate(const GenerateArgs& a) {
    const auto model = parse_mobility_model(a.model_name);
    if (!model) {
        std::cerr << "error: unknown mobility model '" << a.model_name << "'\n";
        return 2;
    }
    const Topology topo = load_topology_arg(a.topology, a.cell_size);
    ModelParams mp = a.params;
    mp.area_width = topo.grid.width();
    mp.area_height = topo.grid.height();
    for (const std::string& warning : validate_params(mp, *model))
        std::cerr << "note: " << warning << '\n';
    const MobilityTrace trace = generate_trace(*model, mp, a.nodes, a.duration, a.seed);
    long crossings = 0;
    for (std::size_t u = 0; u < trace.nodes.size(); ++u)
        crossings += static_cast<long>(
            emit_zone_crossings(trace.nodes[u], topo.grid, static_cast<UserId>(u)).size());
    std::ostringstream body;
    save_mobility_trace(trace, body);
    atomic_write_file(a.out, body.str());
    std::cout << "wrote " << a.out << ": " << a.nodes << " nodes over " << a.duration
              << " s, " << crossings << " zone crossings\n";
    return 0;
}

int cmd_validate(const std::string& scenario_path) {
    int failures = 0;
    auto report = [&](const std::string& check, const std::string& problem) {
        if (problem.empty()) {
            std::cout << "pass: " << check << '\n';
        } else {
            std::cout << "fail: " << check << ": " << problem << '\n';
            ++failures;
        }
    };

    Scenario sc;
    try {
        sc = load_scenario_file(scenario_path);
        report("scenario parses", "");
    } catch (const std::exception& e) {
        report("scenario parses", e.what());
        return 1;
    }
    try {
        validate_scenario(sc);
        report("scenario is runnable", "");
    } catch (const std::exception& e) {
        report("scenario is runnable", e.what());
    }
    Topology topo;
    bool have_topo = false;
    try {
        topo = load_scenario_topology(sc);
        have_topo = true;
        report("topology loads", "");
    } catch (const std::exception& e) {
        report("topology loads", e.what());
    }
    if (have_topo) {
        const auto problems = topology_problems(topo);
        if (problems.empty()) {
            report("topology structure", "");
        } else {
            for (const std::string& p : problems) report("topology structure", p);
        }
    }
    if (sc.mobility == MobilitySource::model) {
        try {
            ModelParams mp = sc.params;
            if (have_topo) {
                mp.area_width = topo.grid.width();
                mp.area_height = topo.grid.height();
            }
            for (const std::string& warning : validate_params(mp, sc.model))
                std::cout << "note: " << warning << '\n';
            report("mobility parameters", "");
        } catch (const std::exception& e) {
            report("mobility parameters", e.what());
        }
    }
    if (failures > 0) {
        std::cout << failures << " check(s) failed\n";
        return 1;
    }
    std::cout << "all checks passed\n";
    return 0;
}

int cmd_simulate(const std::string& scenario_path, const std::string& out_flag,
                 long audit_every) {
    const Scenario sc = load_scenario_file(scenario_path);
    validate_scenario(sc);
    const Topology topo = load_scenario_topology(sc);
    const auto problems = topology_problems(topo);
    if (!problems.empty()) throw ScenarioError("topology: " + problems.front());
    RunOptions opts;
    opts.invariant_check_every = audit_every;
    const EventStream stream = generate_events(topo, sc, sc.calls.cmr, sc.seed);
    std::vector<SweepCell> cells(1);
    cells[0] = {sc.scheme, sc.calls.cmr, sc.seed, run(topo, stream, sc.scheme, sc.ws, opts)};
    std::ostringstream body;
    write_ledger_csv(body, cells);
    emit(out_flag.empty() ? sc.output : out_flag, body.str(), "1 row");
    return 0;
}

int cmd_sweep(const std::string& scenario_path, const std::string& cmr_list,
              const std::string& scheme_list, const std::string& out_flag, long audit_every) {
    const Scenario sc = load_scenario_file(scenario_path);
    validate_scenario(sc);
    const Topology topo = load_scenario_topology(sc);
    const auto problems = topology_problems(topo);
    if (!problems.empty()) throw ScenarioError("topology: " + problems.front());

    std::vector<double> cmrs;
    for (const std::string& item : split_list(cmr_list)) {
        const double c = std::stod(item);
        if (c <= 0.0) throw ScenarioError("cmr values must be positive");
        cmrs.push_back(c);
    }
    std::vector<SchemeKind> schemes;
    for (const std::string& item : split_list(scheme_list)) {
        const auto kind = parse_scheme(item);
        if (!kind) throw ScenarioError("unknown scheme '" + item + "'");
        schemes.push_back(*kind);
    }
    if (cmrs.empty() || schemes.empty())
        throw ScenarioError("sweep needs at least one cmr and one scheme");

    RunOptions opts;
    opts.invariant_check_every = audit_every;
    const auto cells = sweep_cmr(topo, sc, cmrs, schemes, opts);
    std::ostringstream body;
    write_ledger_csv(body, cells);
    emit(out_flag.empty() ? sc.output : out_flag, body.str(),
         std::to_string(cells.size()) + " rows");
    return 0;
}

// Mean and sample standard deviation per (scheme, cmr) cell across input
// rows; the ratio columns aggregate only the rows that carried them.
int cmd_report(const std::vector<std::string>& inputs, const std::string& out_flag) {
    struct Cell {
        std::vector<double> reads, writes, hop_cost, mean_hops, local_ratio;
    };
    std::vector<std::string> order;
    std::map<std::string, Cell> cells;
    for (const std::string& path : inputs) {
        std::istringstream in(read_file(path));
        std::string line;
        if (!std::getline(in, line) || line.rfind("scheme,", 0) != 0)
            throw ScenarioError("'" + path + "' is not a results CSV");
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::vector<std::string> fields;
            std::string field;
            std::istringstream split(line);
            while (std::getline(split, field, ',')) fields.push_back(field);
            while (fields.size() < 15) fields.emplace_back();
            const std::string key = fields[0] + "," + fields[1];
            if (!cells.count(key)) order.push_back(key);
            Cell& cell = cells[key];
            cell.reads.push_back(std::stod(fields[3]));
            cell.writes.push_back(std::stod(fields[4]));
            cell.hop_cost.push_back(std::stod(fields[10]));
            if (!fields[13].empty()) cell.mean_hops.push_back(std::stod(fields[13]));
            if (!fields[14].empty()) cell.local_ratio.push_back(std::stod(fields[14]));
        }
    }
    auto mean_std = [](const std::vector<double>& xs) -> std::pair<double, double> {
        if (xs.empty()) return {0.0, 0.0};
        double mean = 0.0;
        for (double x : xs) mean += x;
        mean /= static_cast<double>(xs.size());
        if (xs.size() < 2) return {mean, 0.0};
        double ss = 0.0;
        for (double x : xs) ss += (x - mean) * (x - mean);
        return {mean, std::sqrt(ss / static_cast<double>(xs.size() - 1))};
    };
    std::ostringstream body;
    body.precision(17);
    body << "scheme,cmr,runs,hop_cost_mean,hop_cost_std,db_reads_mean,db_reads_std,"
            "db_writes_mean,db_writes_std,mean_lookup_hops_mean,mean_lookup_hops_std,"
            "local_ratio_mean,local_ratio_std\n";
    for (const std::string& key : order) {
        const Cell& cell = cells.at(key);
        const auto hop = mean_std(cell.hop_cost);
        const auto rd = mean_std(cell.reads);
        const auto wr = mean_std(cell.writes);
        body << key << ',' << cell.hop_cost.size() << ',' << hop.first << ',' << hop.second
             << ',' << rd.first << ',' << rd.second << ',' << wr.first << ',' << wr.second
             << ',';
        if (cell.mean_hops.empty()) {
            body << ",,,";
        } else {
            const auto mh = mean_std(cell.mean_hops);
            const auto lr = mean_std(cell.local_ratio);
            body << mh.first << ',' << mh.second << ',' << lr.first << ',' << lr.second;
        }
        body << '\n';
    }
    emit(out_flag, body.str(), std::to_string(order.size()) + " cells");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"deterministic location-management simulator"};
    app.require_subcommand(1);

    GenerateArgs gen;
    auto* generate = app.add_subcommand("generate-mobility", "synthesize a position trace");
    generate->add_option("--model", gen.model_name, "mobility model name")->required();
    generate->add_option("--nodes", gen.nodes, "number of nodes")
        ->required()
        ->check(CLI::PositiveNumber);
    generate->add_option("--seed", gen.seed, "run seed")->required();
    generate->add_option("--duration", gen.duration, "trace length, seconds");
    generate->add_option("--out", gen.out, "output trace path")->required();
    generate->add_option("--topology", gen.topology, "'canonical' or a topology file");
    generate->add_option("--cell-size", gen.cell_size, "grid cell size for file topologies");
    generate->add_option("--step-time", gen.params.step_time, "sampling interval");
    generate->add_option("--min-speed", gen.params.min_speed, "lower speed bound");
    generate->add_option("--max-speed", gen.params.max_speed, "upper speed bound");
    generate->add_option("--pause-time", gen.params.pause_time, "pause at each waypoint");
    generate->add_option("--gm-alpha", gen.params.gm_alpha, "memory weight");
    generate->add_option("--gm-mean-speed", gen.params.gm_mean_speed, "asymptotic mean speed");
    generate->add_option("--gm-speed-std", gen.params.gm_speed_std, "speed noise");
    generate->add_option("--gm-dir-std", gen.params.gm_dir_std, "direction noise");
    generate->add_option("--group-count", gen.params.group_count, "groups for group models");
    generate->add_option("--group-radius", gen.params.group_radius, "member spread");
    generate->add_option("--prob-walk-step", gen.params.prob_walk_step, "step length");

    std::string scenario_path, out_flag;
    long audit_every = 0;
    auto* validate = app.add_subcommand("validate", "check a scenario and its topology");
    validate->add_option("--scenario", scenario_path, "scenario file")->required();

    auto* simulate = app.add_subcommand("simulate", "run one scenario cell");
    simulate->add_option("--scenario", scenario_path, "scenario file")->required();
    simulate->add_option("--out", out_flag, "results CSV path (default: scenario output)");
    simulate->add_option("--audit-every", audit_every, "invariant audit period, events");

    std::string cmr_list = "0.25,0.5,1,2,4,8";
    std::string scheme_list = "hlr,ws-hlr,hier,ws-hier";
    auto* sweep = app.add_subcommand("sweep", "replay a cmr grid across schemes");
    sweep->add_option("--scenario", scenario_path, "scenario file")->required();
    sweep->add_option("--cmr", cmr_list, "comma-separated cmr values");
    sweep->add_option("--schemes", scheme_list, "comma-separated scheme names");
    sweep->add_option("--out", out_flag, "results CSV path (default: scenario output)");
    sweep->add_option("--audit-every", audit_every, "invariant audit period, events");

    std::vector<std::string> report_inputs;
    auto* report = app.add_subcommand("report", "aggregate result CSVs into mean and stddev");
    report->add_option("inputs", report_inputs, "result CSV files")->required();
    report->add_option("--out", out_flag, "summary CSV path (default: stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (generate->parsed()) return cmd_generate(gen);
        if (validate->parsed()) return cmd_validate(scenario_path);
        if (simulate->parsed()) return cmd_simulate(scenario_path, out_flag, audit_every);
        if (sweep->parsed())
            return cmd_sweep(scenario_path, cmr_list, scheme_list, out_flag, audit_every);
        if (report->parsed()) return cmd_report(report_inputs, out_flag);
    } catch (const ConsistencyError& e) {
        std::cerr << "consistency abort: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 2;
}
