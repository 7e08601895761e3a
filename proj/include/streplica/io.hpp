#pragma once

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include "streplica/common.hpp"
#include "streplica/nelder_mead.hpp"
#include "streplica/replica.hpp"
#include "streplica/simulator.hpp"
#include "streplica/stats.hpp"

namespace streplica {

namespace detail {

inline std::string fmt_g17(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

inline std::ofstream open_out(const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    return f;
}

} // namespace detail

// columns: t, q, chi, m, R, B, Qhat, chihat, mhat, Rhat, eps_g, cos_sim, iters, residual
inline void write_trajectory_csv(const SaddleTrajectory& traj, const std::string& path) {
    auto f = detail::open_out(path);
    f << "t,q,chi,m,R,B,Qhat,chihat,mhat,Rhat,eps_g,cos_sim,iters,residual\n";
    for (std::size_t t = 0; t < traj.steps.size(); ++t) {
        const StepResult& s = traj.steps[t];
        f << t << ',' << detail::fmt_g17(s.theta.q) << ',' << detail::fmt_g17(s.theta.chi) << ','
          << detail::fmt_g17(s.theta.m) << ',' << (s.theta.has_R ? detail::fmt_g17(s.theta.R) : "")
          << ',' << detail::fmt_g17(s.theta.B) << ',' << detail::fmt_g17(s.hat.Qhat) << ','
          << detail::fmt_g17(s.hat.chihat) << ',' << detail::fmt_g17(s.hat.mhat) << ','
          << (s.hat.has_R ? detail::fmt_g17(s.hat.Rhat) : "") << ',' << detail::fmt_g17(s.eps_g)
          << ',' << detail::fmt_g17(s.cos_sim) << ',' << s.iters << ','
          << detail::fmt_g17(s.residual) << '\n';
    }
}

// columns: t, q_bar, m_bar, B, cos_sim, eps_g, accept_frac
inline void write_trace_csv(const StTrace& trace, const std::string& path) {
    auto f = detail::open_out(path);
    f << "t,q_bar,m_bar,B,cos_sim,eps_g,accept_frac\n";
    for (std::size_t t = 0; t < trace.steps.size(); ++t) {
        const StStepRecord& s = trace.steps[t];
        f << t << ',' << detail::fmt_g17(s.q_bar) << ',' << detail::fmt_g17(s.m_bar) << ','
          << detail::fmt_g17(s.bias) << ',' << detail::fmt_g17(s.cos_sim) << ','
          << detail::fmt_g17(s.eps_g) << ','
          << (t == 0 ? "" : detail::fmt_g17(s.accept_frac)) << '\n';
    }
}

// columns: bin_left, bin_right, mass
inline void write_histogram_csv(const Histogram& h, const std::string& path) {
    auto f = detail::open_out(path);
    f << "bin_left,bin_right,mass\n";
    for (std::size_t b = 0; b < h.mass.size(); ++b)
        f << detail::fmt_g17(h.bin_left[b]) << ',' << detail::fmt_g17(h.bin_right[b]) << ','
          << detail::fmt_g17(h.mass[b]) << '\n';
}

// columns: eval, <param...>, objective (from the recorded improvement history)
inline void write_opt_trace_csv(const OptResult& res, const std::string& path) {
    auto f = detail::open_out(path);
    f << "eval,best_value,simplex_diameter\n";
    for (const auto& row : res.history)
        f << static_cast<long>(row[0]) << ',' << detail::fmt_g17(row[1]) << ','
          << detail::fmt_g17(row[2]) << '\n';
}

// header: y,x_1..x_N (debugging dump)
inline void write_dataset_csv(const Dataset& ds, const std::string& path) {
    auto f = detail::open_out(path);
    f << "y";
    for (int j = 1; j <= ds.cols(); ++j) f << ",x_" << j;
    f << '\n';
    const auto& labels = ds.domain() == DatasetDomain::labeled ? ds.labels()
                                                               : ds.ground_truth_for_eval();
    for (int i = 0; i < ds.rows(); ++i) {
        f << labels[i];
        for (int j = 0; j < ds.cols(); ++j) f << ',' << detail::fmt_g17(ds.row(i)[j]);
        f << '\n';
    }
}

} // namespace streplica
