#pragma once

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "multipass/io.hpp"

namespace multipass::cli {

using nlohmann::json;

namespace detail {

/// Fixed-format numeric printing for CSV so identical runs are
/// byte-identical.
inline std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline void emit(std::ostream& out, const json& j) { out << j.dump(2) << "\n"; }

struct Sweep {
    double L1, L2;
    int steps;
};

inline Sweep parse_sweep(const std::string& s) {
    Sweep w{};
    if (std::sscanf(s.c_str(), "%lf:%lf:%d", &w.L1, &w.L2, &w.steps) != 3 || w.steps < 2 ||
        !(w.L1 > 0) || !(w.L2 > w.L1))
        throw parse_error("--sweep expects L1:L2:steps with L2 > L1 > 0 and steps >= 2");
    return w;
}

inline std::pair<int, int> parse_nm(const std::string& s) {
    int n = 0, m = 0;
    if (std::sscanf(s.c_str(), "%d,%d", &n, &m) != 2)
        throw parse_error("--nm expects the form n,m");
    return {n, m};
}

inline std::ostream& open_or(std::ofstream& file, const std::string& path, std::ostream& fallback) {
    if (path.empty())
        return fallback;
    file.open(path);
    if (!file)
        throw parse_error("cannot open output file: " + path);
    return file;
}

} // namespace detail

/// Runs one subcommand. Writes artifacts to `out`, structured errors to
/// `err`. Returns the process exit code: 0 on success, 2 on domain or
/// precondition errors, 64 on usage errors.
inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"multipolar interaction landscapes, critical points, and mountain-pass paths"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all");

    // ---- multipoles -------------------------------------------------------
    auto* cmd_multi = app.add_subcommand("multipoles", "multipole moments of a molecule file");
    std::string multi_file;
    int multi_order = 4;
    std::string multi_out;
    cmd_multi->add_option("file", multi_file, "molecule JSON file")->required();
    cmd_multi->add_option("--order", multi_order, "highest order to compute (1..4)");
    cmd_multi->add_option("--out", multi_out, "output path (default stdout)");

    // ---- interact ---------------------------------------------------------
    auto* cmd_inter = app.add_subcommand("interact", "pair interaction table and expansion");
    std::string inter_f1, inter_f2, inter_U, inter_V, inter_sweep, inter_out;
    double inter_L = 0.0;
    int inter_order = 5;
    cmd_inter->add_option("file1", inter_f1)->required();
    cmd_inter->add_option("file2", inter_f2)->required();
    cmd_inter->add_option("--L", inter_L, "separation along e1");
    cmd_inter->add_option("--U", inter_U, "rotation of molecule 1: w:x:y:z or aa:ax:ay:az:theta");
    cmd_inter->add_option("--V", inter_V, "rotation of molecule 2");
    cmd_inter->add_option("--order", inter_order, "expansion order N (2..5)");
    cmd_inter->add_option("--sweep", inter_sweep, "L1:L2:steps CSV sweep of L");
    cmd_inter->add_option("--out", inter_out);

    // ---- critical ---------------------------------------------------------
    auto* cmd_crit = app.add_subcommand("critical", "critical-point analysis");
    cmd_crit->require_subcommand(1);

    auto* crit_scan = cmd_crit->add_subcommand("scan", "near-critical negativity Monte Carlo");
    std::vector<std::string> scan_pair;
    std::string scan_nm = "1,1", scan_out;
    double scan_delta = -1.0;
    int scan_samples = 10000;
    std::uint64_t scan_seed = 1;
    crit_scan->add_option("--pair", scan_pair, "two molecule files")->expected(2)->required();
    crit_scan->add_option("--nm", scan_nm, "interaction orders n,m");
    crit_scan->add_option("--delta", scan_delta, "threshold (default: per-case value)");
    crit_scan->add_option("--samples", scan_samples);
    crit_scan->add_option("--seed", scan_seed);
    crit_scan->add_option("--out", scan_out);

    auto* crit_conn = cmd_crit->add_subcommand("connect", "negative-sublevel path");
    std::vector<std::string> conn_pair;
    std::string conn_nm = "1,1", conn_from, conn_to, conn_out;
    double conn_delta = -1.0;
    crit_conn->add_option("--pair", conn_pair)->expected(2)->required();
    crit_conn->add_option("--nm", conn_nm);
    crit_conn->add_option("--from", conn_from, "config JSON file")->required();
    crit_conn->add_option("--to", conn_to, "config JSON file")->required();
    crit_conn->add_option("--delta", conn_delta, "sublevel depth (default delta0/2)");
    crit_conn->add_option("--out", conn_out);

    auto* crit_qq = cmd_crit->add_subcommand("qq", "quadrupole-quadrupole structure");
    std::vector<std::string> qq_pair;
    std::string qq_orient, qq_out;
    crit_qq->add_option("--pair", qq_pair)->expected(2)->required();
    crit_qq->add_option("--orientation", qq_orient, "orientation of Q1: w:x:y:z");
    crit_qq->add_option("--out", qq_out);

    auto* crit_oct = cmd_crit->add_subcommand("octopole", "octopole kernel directions");
    std::string oct_file, oct_out;
    double oct_tol = 1e-8;
    crit_oct->add_option("--file", oct_file)->required();
    crit_oct->add_option("--tol", oct_tol);
    crit_oct->add_option("--out", oct_out);

    // ---- mountain-pass ----------------------------------------------------
    auto* cmd_mp = app.add_subcommand("mountain-pass", "min-max path optimization");
    std::string mp_model, mp_from, mp_to, mp_prefix = "mountain_pass";
    int mp_nodes = 64, mp_iters = 500;
    double mp_surgery_L = 0.0;
    cmd_mp->add_option("--model", mp_model, "model JSON file")->required();
    cmd_mp->add_option("--from", mp_from, "config JSON file")->required();
    cmd_mp->add_option("--to", mp_to, "config JSON file")->required();
    cmd_mp->add_option("--nodes", mp_nodes);
    cmd_mp->add_option("--iters", mp_iters);
    cmd_mp->add_option("--surgery-L", mp_surgery_L, "apply surgery at this separation first");
    cmd_mp->add_option("--out-prefix", mp_prefix, "prefix for path.csv / surgery.json / transition.json");

    // ---- vdw-toy ----------------------------------------------------------
    auto* cmd_vdw = app.add_subcommand("vdw-toy", "toy van der Waals positivity check");
    std::string vdw_a, vdw_b, vdw_out;
    int vdw_samples = 1000;
    std::uint64_t vdw_seed = 1;
    cmd_vdw->add_option("--a", vdw_a)->required();
    cmd_vdw->add_option("--b", vdw_b)->required();
    cmd_vdw->add_option("--samples", vdw_samples);
    cmd_vdw->add_option("--seed", vdw_seed);
    cmd_vdw->add_option("--out", vdw_out);

    // ---- dress ------------------------------------------------------------
    auto* cmd_dress = app.add_subcommand("dress", "dress a Hamiltonian family with states");
    std::string dress_family, dress_out;
    double dress_eps = 1e-3;
    cmd_dress->add_option("--family", dress_family, "family JSON file")->required();
    cmd_dress->add_option("--eps", dress_eps, "allowed Rayleigh excess");
    cmd_dress->add_option("--out", dress_out);

    std::vector<char*> argv;
    std::vector<std::string> storage = args;
    storage.insert(storage.begin(), "multipass");
    for (auto& s : storage)
        argv.push_back(s.data());

    try {
        app.parse(int(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << e.what() << "\n" << app.help();
        return 64;
    }

    try {
        if (*cmd_multi) {
            ChargeDistribution d = io::load_molecule(multi_file);
            MultipoleSet m = compute_multipoles(d, multi_order);
            std::ofstream f;
            detail::emit(detail::open_or(f, multi_out, out), io::multipoles_to_json(m));
            return 0;
        }

        if (*cmd_inter) {
            ChargeDistribution d1 = io::load_molecule(inter_f1);
            ChargeDistribution d2 = io::load_molecule(inter_f2);
            Rotation U = inter_U.empty() ? Rotation() : io::rotation_from_string(inter_U);
            Rotation V = inter_V.empty() ? Rotation() : io::rotation_from_string(inter_V);
            std::ofstream f;
            std::ostream& o = detail::open_or(f, inter_out, out);
            if (!inter_sweep.empty()) {
                detail::Sweep w = detail::parse_sweep(inter_sweep);
                o << "L,value,direct_coulomb\n";
                for (int k = 0; k < w.steps; ++k) {
                    double L = w.L1 + (w.L2 - w.L1) * double(k) / (w.steps - 1);
                    auto [table, value] = interaction_expansion(d1, d2, U, V, L, inter_order);
                    double exact = direct_coulomb(d1, d2, U, V, L);
                    o << detail::num(L) << "," << detail::num(value) << ","
                      << detail::num(exact) << "\n";
                }
                return 0;
            }
            if (!(inter_L > 0.0))
                throw invalid_input_error("interact requires --L or --sweep");
            auto [table, value] = interaction_expansion(d1, d2, U, V, inter_L, inter_order);
            json j = {{"L", inter_L},
                      {"order", inter_order},
                      {"entries", io::interaction_table_to_json(table)},
                      {"value", value},
                      {"direct_coulomb", direct_coulomb(d1, d2, U, V, inter_L)}};
            detail::emit(o, j);
            return 0;
        }

        if (*crit_scan) {
            auto [n, m] = detail::parse_nm(scan_nm);
            MultipoleSet m1 = compute_multipoles(io::load_molecule(scan_pair[0]));
            MultipoleSet m2 = compute_multipoles(io::load_molecule(scan_pair[1]));
            double delta = scan_delta > 0 ? scan_delta : localmin_default_delta(n, m, m1, m2);
            LocalMinReport rep = verify_localmin_property(n, m, m1, m2, delta, scan_samples,
                                                          scan_seed);
            json cex = json::array();
            for (const auto& c : rep.counterexamples)
                cex.push_back({{"U", io::rotation_to_json(c.point.U)},
                               {"V", io::rotation_to_json(c.point.V)},
                               {"f", c.f},
                               {"grad_norm", c.grad_norm},
                               {"hess_min_eig", c.hess_min_eig}});
            json j = {{"n", n},
                      {"m", m},
                      {"delta", delta},
                      {"samples", rep.samples},
                      {"seed", rep.seed},
                      {"near_critical_count", rep.near_critical_count},
                      {"min_f_at_near_critical",
                       rep.near_critical_count ? json(rep.min_f_at_near_critical) : json()},
                      {"counterexamples", cex}};
            std::ofstream f;
            detail::emit(detail::open_or(f, scan_out, out), j);
            return 0;
        }

        if (*crit_conn) {
            auto [n, m] = detail::parse_nm(conn_nm);
            MultipoleSet m1 = compute_multipoles(io::load_molecule(conn_pair[0]));
            MultipoleSet m2 = compute_multipoles(io::load_molecule(conn_pair[1]));
            Config a = io::config_from_json(io::load_json_file(conn_from), conn_from);
            Config b = io::config_from_json(io::load_json_file(conn_to), conn_to);
            ConnectContext ctx = make_connect_context(n, m, m1, m2);
            double delta = conn_delta > 0 ? conn_delta : 0.5 * ctx.delta0;
            SublevelPath path =
                connect_negative_sublevel(ctx, {a.U, a.V}, {b.U, b.V}, delta);
            std::ofstream f;
            std::ostream& o = detail::open_or(f, conn_out, out);
            o << "index,Uw,Ux,Uy,Uz,Vw,Vx,Vy,Vz,F\n";
            for (std::size_t i = 0; i < path.nodes.size(); ++i) {
                const auto& nd = path.nodes[i];
                o << i << "," << detail::num(nd.U.w()) << "," << detail::num(nd.U.x()) << ","
                  << detail::num(nd.U.y()) << "," << detail::num(nd.U.z()) << ","
                  << detail::num(nd.V.w()) << "," << detail::num(nd.V.x()) << ","
                  << detail::num(nd.V.y()) << "," << detail::num(nd.V.z()) << ","
                  << detail::num(path.f_values[i]) << "\n";
            }
            return 0;
        }

        if (*crit_qq) {
            MultipoleSet m1 = compute_multipoles(io::load_molecule(qq_pair[0]));
            MultipoleSet m2 = compute_multipoles(io::load_molecule(qq_pair[1]));
            Rotation orient =
                qq_orient.empty() ? Rotation() : io::rotation_from_string(qq_orient);
            QQStructure s = qq_structure(m1.quadrupole, m2.quadrupole, orient);
            json perms = json::array(), crit = json::array(), hess = json::array();
            for (int i = 0; i < 6; ++i) {
                perms.push_back({s.permutations[i][0], s.permutations[i][1], s.permutations[i][2]});
                crit.push_back(s.critical_values[i]);
                hess.push_back(s.hess_min_eig_at_each_critical[i]);
            }
            json j = {{"eigen_a", {s.eigen_a[0], s.eigen_a[1], s.eigen_a[2]}},
                      {"eigen_b", {s.eigen_b[0], s.eigen_b[1], s.eigen_b[2]}},
                      {"permutations", perms},
                      {"critical_values", crit},
                      {"hess_min_eig_at_each_critical", hess},
                      {"g_min", s.g_min},
                      {"h_max", s.h_max}};
            std::ofstream f;
            detail::emit(detail::open_or(f, qq_out, out), j);
            return 0;
        }

        if (*crit_oct) {
            MultipoleSet m = compute_multipoles(io::load_molecule(oct_file));
            bool nondeg = check_octopole_nondegeneracy(m.octopole);
            json kv = json::array();
            if (m.octopole.frobenius_norm() > 0) {
                for (const auto& v : octopole_kernel_vectors(m.octopole, oct_tol))
                    kv.push_back({v.x(), v.y(), v.z()});
            }
            json j = {{"nondegenerate", nondeg}, {"kernel_vectors", kv}};
            std::ofstream f;
            detail::emit(detail::open_or(f, oct_out, out), j);
            return 0;
        }

        if (*cmd_mp) {
            ModelEnergy me = io::model_from_json(io::load_json_file(mp_model), mp_model);
            Config a = io::config_from_json(io::load_json_file(mp_from), mp_from);
            Config b = io::config_from_json(io::load_json_file(mp_to), mp_to);
            DiscretePath path = make_geodesic_path(me, a, b, mp_nodes);

            json surgery_json = {{"applied", false}};
            if (mp_surgery_L > 0.0) {
                auto [cut, rep] = surgery(me, path, mp_surgery_L);
                path = cut;
                json seg = json::array();
                for (const auto& c : rep.replaced_segment.nodes)
                    seg.push_back(io::config_to_json(c));
                surgery_json = {{"applied", rep.applied},
                                {"route", rep.route},
                                {"L_star", rep.L_star},
                                {"t0_index", rep.t0_index},
                                {"t1_index", rep.t1_index},
                                {"max_energy_before", rep.max_energy_before},
                                {"max_energy_after", rep.max_energy_after},
                                {"replaced_segment", seg}};
            }

            MinMaxOptions mo;
            mo.iters = mp_iters;
            DiscretePath opt = minmax_optimize(me, path, mo);
            TransitionState ts = transition_state(me, opt);

            std::ofstream pf(mp_prefix + "_path.csv");
            if (!pf)
                throw parse_error("cannot open output file: " + mp_prefix + "_path.csv");
            pf << "t,L,Uw,Ux,Uy,Uz,Vw,Vx,Vy,Vz,energy\n";
            for (std::size_t i = 0; i < opt.nodes.size(); ++i) {
                const Config& c = opt.nodes[i];
                pf << detail::num(double(i) / double(opt.nodes.size() - 1)) << ","
                   << detail::num(c.L) << "," << detail::num(c.U.w()) << ","
                   << detail::num(c.U.x()) << "," << detail::num(c.U.y()) << ","
                   << detail::num(c.U.z()) << "," << detail::num(c.V.w()) << ","
                   << detail::num(c.V.x()) << "," << detail::num(c.V.y()) << ","
                   << detail::num(c.V.z()) << "," << detail::num(opt.energies[i]) << "\n";
            }

            std::ofstream sf(mp_prefix + "_surgery.json");
            sf << surgery_json.dump(2) << "\n";

            json spec = json::array();
            for (int i = 0; i < 7; ++i)
                spec.push_back(ts.hess_spectrum[i]);
            json tj = {{"tau", io::config_to_json(ts.tau)},
                       {"energy", ts.energy},
                       {"grad_norm", ts.grad_norm},
                       {"hess_spectrum", spec},
                       {"negative_count", ts.negative_count},
                       {"zero_count", ts.zero_count},
                       {"refined", ts.refined},
                       {"boundary_active", ts.boundary_active}};
            std::ofstream tf(mp_prefix + "_transition.json");
            tf << tj.dump(2) << "\n";

            json summary = {{"max_energy", opt.max_energy()},
                            {"nodes", opt.nodes.size()},
                            {"transition_energy", ts.energy},
                            {"artifacts",
                             {mp_prefix + "_path.csv", mp_prefix + "_surgery.json",
                              mp_prefix + "_transition.json"}}};
            detail::emit(out, summary);
            return 0;
        }

        if (*cmd_vdw) {
            ToyMolecule a = io::load_toymolecule(vdw_a);
            ToyMolecule b = io::load_toymolecule(vdw_b);
            VdwPositivityReport rep = check_vdw_positivity(a, b, vdw_samples, vdw_seed);
            json viols = json::array();
            for (const auto& v : rep.violations)
                viols.push_back({{"U", io::rotation_to_json(v.U)},
                                 {"V", io::rotation_to_json(v.V)},
                                 {"c", v.c},
                                 {"excitation_norm", v.excitation_norm}});
            json j = {{"samples", rep.samples},
                      {"seed", rep.seed},
                      {"min_c", rep.min_c},
                      {"min_excitation_norm", rep.min_excitation_norm},
                      {"violations", viols}};
            std::ofstream f;
            detail::emit(detail::open_or(f, vdw_out, out), j);
            return 0;
        }

        if (*cmd_dress) {
            HermitianFamily fam = io::family_from_json(io::load_json_file(dress_family),
                                                       dress_family);
            Eigen::SelfAdjointEigenSolver<MatC> e0(fam.H(0.0)), e1(fam.H(1.0));
            DressedPath p = dress_path(fam, e0.eigenvectors().col(0), e1.eigenvectors().col(0),
                                       dress_eps);
            std::ofstream f;
            std::ostream& o = detail::open_or(f, dress_out, out);
            o << "t,rayleigh,ground_energy\n";
            for (std::size_t i = 0; i < p.t.size(); ++i)
                o << detail::num(p.t[i]) << "," << detail::num(p.rayleigh[i]) << ","
                  << detail::num(p.ground_energy[i]) << "\n";
            return 0;
        }
    } catch (const error& e) {
        json j = {{"error", e.code()}, {"message", e.what()}};
        err << j.dump() << "\n";
        return 2;
    } catch (const std::exception& e) {
        json j = {{"error", "internal"}, {"message", e.what()}};
        err << j.dump() << "\n";
        return 2;
    }
    return 64;
}

inline int run_main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run(args, std::cout, std::cerr);
}

} // namespace multipass::cli
