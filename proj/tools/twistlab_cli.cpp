#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

#include "twistlab/experiments.hpp"

using namespace twistlab;
using namespace twistlab::experiments;

namespace {

template <class T>
std::vector<T> parse_list(const std::string& s, const char* what) {
    std::vector<T> out;
    std::stringstream in(s);
    std::string item;
    while (std::getline(in, item, ',')) {
        std::istringstream one(item);
        T v;
        if (!(one >> v) || !(one >> std::ws).eof()) throw precondition_error(std::string("bad value in ") + what + ": '" + item + "'");
        out.push_back(v);
    }
    if (out.empty()) throw precondition_error(std::string("empty list for ") + what);
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"twistlab: rank distributions, Selmer and class group surveys, spacing and grid checks"};
    app.require_subcommand(1);

    std::uint64_t seed = default_seed;
    std::string out, format = "csv";
    unsigned threads = 0;
    bool wall_time = false;
    app.add_option("--seed", seed, "64-bit seed")->capture_default_str();
    app.add_option("--out", out, "report path (stdout when omitted)");
    app.add_option("--format", format, "csv or json")->check(CLI::IsMember({"csv", "json"}))->capture_default_str();
    app.add_option("--threads", threads, "worker threads, 0 = all cores")->capture_default_str();
    app.add_flag("--wall-time", wall_time, "record elapsed seconds in the report header");

    std::function<Outcome()> job;
    auto sub = [&](const char* name, const char* help) {
        auto* s = app.add_subcommand(name, help);
        s->fallthrough();
        return s;
    };

    RankdistParams rk;
    auto* c = sub("rankdist", "kernel-rank distribution of random F2 matrices");
    c->add_option("--n", rk.n)->capture_default_str();
    c->add_option("--kind", rk.kind, "alternating or general")->capture_default_str();
    c->add_option("--mode", rk.mode, "exact or mc")->capture_default_str();
    c->add_option("--samples", rk.samples)->capture_default_str();
    c->callback([&] { job = [&] { return run_rankdist(rk, seed); }; });

    SelmerSurveyParams sv;
    std::string curve = "-1,1", residues = "1,2,3";
    c = sub("selmer-survey", "2-Selmer ranks over quadratic twists");
    c->add_option("--curve", curve, "a,b for y^2 = x(x+a)(x+b)")->capture_default_str()->allow_extra_args(false);
    c->add_option("--dmax", sv.dmax)->capture_default_str();
    c->add_option("--residues", residues, "residues of d mod 8")->capture_default_str();
    c->add_option("--sample-fraction", sv.sample_fraction)->capture_default_str();
    c->callback([&] {
        job = [&] {
            auto ab = parse_list<std::int64_t>(curve, "--curve");
            if (ab.size() != 2) throw precondition_error("--curve takes two integers a,b");
            sv.a = ab[0];
            sv.b = ab[1];
            sv.residues = parse_list<int>(residues, "--residues");
            return run_selmer_survey(sv, seed);
        };
    });

    ClassSurveyParams cs;
    bool no_redei = false;
    c = sub("class-survey", "2-power ranks of imaginary quadratic class groups");
    c->add_option("--dmax", cs.dmax)->capture_default_str();
    c->add_option("--kmax", cs.kmax)->capture_default_str();
    c->add_flag("--no-redei", no_redei, "skip the Redei cross-check");
    c->callback([&] {
        job = [&] {
            cs.check_redei = !no_redei;
            return run_class_survey(cs, seed);
        };
    });

    SpacingCmdParams sp;
    c = sub("spacing", "spacing predicates on Poisson samples or integers");
    c->add_option("--model", sp.model, "poisson or integers")->capture_default_str();
    c->add_option("--n", sp.n)->capture_default_str();
    c->add_option("--L", sp.L)->capture_default_str();
    c->add_option("--L0", sp.L0)->capture_default_str();
    c->add_option("--delta", sp.delta)->capture_default_str();
    c->add_option("--C0", sp.C0)->capture_default_str();
    c->add_option("--trials", sp.trials)->capture_default_str();
    c->add_option("--N", sp.N)->capture_default_str();
    c->add_option("--r", sp.r)->capture_default_str();
    c->add_option("--D", sp.D)->capture_default_str();
    c->add_option("--D1", sp.D1)->capture_default_str();
    c->callback([&] { job = [&] { return run_spacing(sp, seed); }; });

    RamanujanParams ra;
    std::string ks = "1,2,3", us = "100,10000,100000000";
    c = sub("ramanujan", "the iterated integral I_k(u)");
    c->add_option("--k", ks, "comma-separated k")->capture_default_str();
    c->add_option("--u", us, "comma-separated u")->capture_default_str();
    c->add_option("--tol", ra.tol)->capture_default_str();
    c->callback([&] {
        job = [&] {
            ra.k = parse_list<unsigned>(ks, "--k");
            ra.u = parse_list<double>(us, "--u");
            return run_ramanujan(ra, seed);
        };
    });

    SubgridParams sg;
    c = sub("subgrid", "subgrid counting bound on small grids");
    c->add_option("--n", sg.n)->capture_default_str();
    c->add_option("--r", sg.r)->capture_default_str();
    c->add_option("--d", sg.d)->capture_default_str();
    c->add_option("--trials", sg.trials, "random subsets; 0 sweeps every subset")->capture_default_str();
    c->callback([&] { job = [&] { return run_subgrid(sg, seed); }; });

    ARCheckParams ar;
    c = sub("ar-check", "density bound for random additive-restrictive systems");
    c->add_option("--systems", ar.systems)->capture_default_str();
    c->add_option("--d-max", ar.d_max)->capture_default_str();
    c->add_option("--size-max", ar.size_max)->capture_default_str();
    c->add_option("--bits-max", ar.bits_max, "groups have at most 2^bits elements")->capture_default_str();
    c->callback([&] { job = [&] { return run_ar_check(ar, seed); }; });

    PermMomentParams pm;
    c = sub("perm-moment", "second moment over permuted symbol conditions");
    c->add_option("--r", pm.r)->capture_default_str();
    c->add_option("--k0", pm.k0)->capture_default_str();
    c->add_option("--k1", pm.k1)->capture_default_str();
    c->add_option("--k2", pm.k2)->capture_default_str();
    c->add_option("--P", pm.P, "size of P")->capture_default_str();
    c->add_option("--trials", pm.trials)->capture_default_str();
    c->add_flag("--all", pm.all, "every (k0, k1) meeting the hypothesis");
    c->callback([&] { job = [&] { return run_perm_moment(pm, seed); }; });

    BoxEquiParams be;
    std::string Ps = "-1";
    c = sub("box-equi", "Legendre symbol fibers over a product of prime intervals");
    c->add_option("--r", be.r)->capture_default_str();
    c->add_option("--start", be.start)->capture_default_str();
    c->add_option("--width", be.width)->capture_default_str();
    c->add_option("--m", be.m, "pair conditions")->capture_default_str();
    c->add_option("--mp", be.mp, "conditions against P")->capture_default_str();
    c->add_option("--P", Ps, "comma-separated P, starting with -1")->capture_default_str();
    c->callback([&] {
        job = [&] {
            be.P = parse_list<std::int64_t>(Ps, "--P");
            return run_box_equi(be, seed);
        };
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        parallel::set_thread_count(threads);
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o = job();
        if (wall_time)
            o.report.set("wall_time_s",
                         std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
        write_report(o.report, format == "json" ? ReportFormat::json : ReportFormat::csv, out);
        return o.status;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
