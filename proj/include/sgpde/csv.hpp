#pragma once

#include <cstdio>
#include <string>
#include <vector>

#include "core.hpp"
#include "estimator.hpp"
#include "io.hpp"
#include "reference.hpp"
#include "sampler.hpp"
#include "training.hpp"

namespace sgpde {

// All CSV output goes through these writers: %.17g round-trips doubles, and
// every file is written atomically (temp + rename).

namespace detail {
inline void append_g17(std::string& out, double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out += buf;
}
}  // namespace detail

// epoch,interior,terminal,boundary,total,lr
inline void write_loss_history_csv(const std::string& path,
                                   const std::vector<EpochRecord>& history) {
    std::string out = "epoch,interior,terminal,boundary,total,lr\n";
    for (const auto& r : history) {
        out += std::to_string(r.epoch);
        out += ',';
        detail::append_g17(out, r.loss.interior);
        out += ',';
        detail::append_g17(out, r.loss.terminal);
        out += ',';
        detail::append_g17(out, r.loss.boundary);
        out += ',';
        detail::append_g17(out, r.loss.total());
        out += ',';
        detail::append_g17(out, r.lr);
        out += '\n';
    }
    write_file_atomic(path, out);
}

// n,t,mean,std,guarded
inline void write_error_curve_csv(const std::string& path, const ErrorCurve& c) {
    std::string out = "n,t,mean,std,guarded\n";
    for (std::size_t n = 0; n < c.times.size(); ++n) {
        out += std::to_string(n);
        out += ',';
        detail::append_g17(out, c.times[n]);
        out += ',';
        detail::append_g17(out, c.mean(static_cast<long>(n)));
        out += ',';
        detail::append_g17(out, c.stddev(static_cast<long>(n)));
        out += ',';
        out += std::to_string(c.guarded[n]);
        out += '\n';
    }
    write_file_atomic(path, out);
}

// method,n,t,mean,std — several curves side by side in long format
inline void write_comparison_csv(
    const std::string& path,
    const std::vector<std::pair<std::string, ErrorCurve>>& curves) {
    std::string out = "method,n,t,mean,std\n";
    for (const auto& [name, c] : curves) {
        for (std::size_t n = 0; n < c.times.size(); ++n) {
            out += name;
            out += ',';
            out += std::to_string(n);
            out += ',';
            detail::append_g17(out, c.times[n]);
            out += ',';
            detail::append_g17(out, c.mean(static_cast<long>(n)));
            out += ',';
            detail::append_g17(out, c.stddev(static_cast<long>(n)));
            out += '\n';
        }
    }
    write_file_atomic(path, out);
}

// M,dt,linf in long format
inline void write_error_matrix_csv(const std::string& path, const ErrorMatrix& em) {
    std::string out = "M,dt,linf\n";
    for (std::size_t i = 0; i < em.M_values.size(); ++i) {
        for (std::size_t j = 0; j < em.dt_values.size(); ++j) {
            out += std::to_string(em.M_values[i]);
            out += ',';
            detail::append_g17(out, em.dt_values[j]);
            out += ',';
            detail::append_g17(out, em.linf(static_cast<long>(i), static_cast<long>(j)));
            out += '\n';
        }
    }
    write_file_atomic(path, out);
}

// Readable log10 sup-norm table, dt columns across, M rows down.
inline void write_error_matrix_table(const std::string& path, const ErrorMatrix& em) {
    std::string out = "log10 sup-norm error (rows: M, columns: local dt)\n\n";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%10s", "M \\ dt");
    out += buf;
    for (double dt : em.dt_values) {
        std::snprintf(buf, sizeof(buf), " %12.6g", dt);
        out += buf;
    }
    out += '\n';
    for (std::size_t i = 0; i < em.M_values.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%10ld", em.M_values[i]);
        out += buf;
        for (std::size_t j = 0; j < em.dt_values.size(); ++j) {
            const double v = em.linf(static_cast<long>(i), static_cast<long>(j));
            std::snprintf(buf, sizeof(buf), " %12.4f", std::log10(v));
            out += buf;
        }
        out += '\n';
    }
    write_file_atomic(path, out);
}

// dt,M,mean,var,stderr
inline void write_moment_scan_csv(const std::string& path,
                                  const std::vector<MomentRow>& rows) {
    std::string out = "dt,M,mean,var,stderr\n";
    for (const auto& r : rows) {
        detail::append_g17(out, r.dt);
        out += ',';
        out += std::to_string(r.M);
        out += ',';
        detail::append_g17(out, r.mean);
        out += ',';
        detail::append_g17(out, r.var);
        out += ',';
        detail::append_g17(out, r.std_err);
        out += '\n';
    }
    write_file_atomic(path, out);
}

// traj_id,n,t,Y,X_1..X_k with k capped at 8 coordinates
inline void write_trajectories_csv(const std::string& path,
                                   const std::vector<TrajectoryBatch>& trajs,
                                   int coords) {
    require(coords >= 1 && coords <= 8, "trajectory dump keeps between 1 and 8 coordinates");
    int k = coords;
    for (const auto& tb : trajs) k = std::min<int>(k, static_cast<int>(tb.X.cols()));
    std::string out = "traj_id,n,t,Y";
    for (int c = 0; c < k; ++c) out += ",X_" + std::to_string(c + 1);
    out += '\n';
    for (std::size_t id = 0; id < trajs.size(); ++id) {
        const auto& tb = trajs[id];
        for (std::size_t n = 0; n < tb.grid.points.size(); ++n) {
            out += std::to_string(id);
            out += ',';
            out += std::to_string(n);
            out += ',';
            detail::append_g17(out, tb.grid.points[n]);
            out += ',';
            detail::append_g17(out, tb.Y(static_cast<long>(n)));
            for (int c = 0; c < k; ++c) {
                out += ',';
                detail::append_g17(out, tb.X(static_cast<long>(n), c));
            }
            out += '\n';
        }
    }
    write_file_atomic(path, out);
}

}  // namespace sgpde
