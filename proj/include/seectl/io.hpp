#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "seectl/adjoint.hpp"
#include "seectl/cauchy.hpp"
#include "seectl/control.hpp"
#include "seectl/errors.hpp"
#include "seectl/forward.hpp"
#include "seectl/noise.hpp"
#include "seectl/problem.hpp"

namespace seectl {

namespace detail {

inline void write_bytes(std::ostream& os, const void* p, std::size_t n) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

inline void read_bytes(std::istream& is, void* p, std::size_t n, const char* what) {
    is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!is) throw ConfigError(std::string("cache read truncated at ") + what);
}

template <typename T>
void write_pod(std::ostream& os, const T& v) {
    write_bytes(os, &v, sizeof(T));
}

template <typename T>
T read_pod(std::istream& is, const char* what) {
    T v{};
    read_bytes(is, &v, sizeof(T), what);
    return v;
}

/// Shortest round-trip decimal text for a double; stable across runs.
inline std::string format_full(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace detail

// --------------------------------------------------------------------------
// Noise cache: magic, version, seed, grid, marks, then the raw arrays.

inline void write_noise_cache(const std::string& path, const NoiseEnsemble& noise) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ConfigError("cannot open noise cache for writing: " + path);
    os.write("SEECTLN1", 8);
    detail::write_pod<std::uint32_t>(os, 1);  // layout version
    detail::write_pod<std::uint64_t>(os, noise.seed());
    detail::write_pod<double>(os, noise.grid().horizon);
    detail::write_pod<std::int32_t>(os, noise.grid().steps);
    detail::write_pod<std::int32_t>(os, noise.paths());
    detail::write_pod<std::int32_t>(os, noise.marks().size());
    for (double a : noise.marks().atoms) detail::write_pod<double>(os, a);
    for (double v : noise.marks().intensities) detail::write_pod<double>(os, v);
    detail::write_bytes(os, noise.dw_data().data(), noise.dw_data().size() * sizeof(double));
    detail::write_bytes(os, noise.jump_data().data(),
                        noise.jump_data().size() * sizeof(std::uint32_t));
    if (!os) throw ConfigError("noise cache write failed: " + path);
}

inline NoiseEnsemble read_noise_cache(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("cannot open noise cache: " + path);
    char magic[8];
    detail::read_bytes(is, magic, 8, "magic");
    if (std::memcmp(magic, "SEECTLN1", 8) != 0)
        throw ConfigError("noise cache has wrong magic: " + path);
    if (detail::read_pod<std::uint32_t>(is, "version") != 1)
        throw ConfigError("noise cache has unsupported version: " + path);
    const auto seed = detail::read_pod<std::uint64_t>(is, "seed");
    const double horizon = detail::read_pod<double>(is, "horizon");
    const int steps = detail::read_pod<std::int32_t>(is, "steps");
    const int paths = detail::read_pod<std::int32_t>(is, "paths");
    const int m = detail::read_pod<std::int32_t>(is, "marks");
    if (steps < 1 || paths < 1 || m < 0)
        throw ConfigError("noise cache header is malformed: " + path);
    std::vector<double> atoms(m), nus(m);
    for (auto& a : atoms) a = detail::read_pod<double>(is, "atom");
    for (auto& v : nus) v = detail::read_pod<double>(is, "intensity");
    const std::size_t nw = static_cast<std::size_t>(paths) * steps;
    std::vector<double> dw(nw);
    std::vector<std::uint32_t> counts(nw * m);
    detail::read_bytes(is, dw.data(), dw.size() * sizeof(double), "dw");
    detail::read_bytes(is, counts.data(), counts.size() * sizeof(std::uint32_t), "counts");
    return NoiseEnsemble::from_storage(TimeGrid{horizon, steps},
                                       MarkSpace{std::move(atoms), std::move(nus)}, paths, seed,
                                       std::move(dw), std::move(counts));
}

// --------------------------------------------------------------------------
// State cache: same header discipline, then per-path row-major blocks.

inline void write_state_cache(const std::string& path, const StateEnsemble& states) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ConfigError("cannot open state cache for writing: " + path);
    os.write("SEECTLS1", 8);
    detail::write_pod<std::uint32_t>(os, 1);
    detail::write_pod<double>(os, states.grid.horizon);
    detail::write_pod<std::int32_t>(os, states.grid.steps);
    detail::write_pod<std::int32_t>(os, states.paths());
    detail::write_pod<std::int32_t>(os, states.state_dim);
    for (const auto& m : states.values)
        for (int k = 0; k < m.rows(); ++k)
            for (int i = 0; i < m.cols(); ++i) detail::write_pod<double>(os, m(k, i));
    if (!os) throw ConfigError("state cache write failed: " + path);
}

inline StateEnsemble read_state_cache(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("cannot open state cache: " + path);
    char magic[8];
    detail::read_bytes(is, magic, 8, "magic");
    if (std::memcmp(magic, "SEECTLS1", 8) != 0)
        throw ConfigError("state cache has wrong magic: " + path);
    if (detail::read_pod<std::uint32_t>(is, "version") != 1)
        throw ConfigError("state cache has unsupported version: " + path);
    const double horizon = detail::read_pod<double>(is, "horizon");
    const int steps = detail::read_pod<std::int32_t>(is, "steps");
    const int paths = detail::read_pod<std::int32_t>(is, "paths");
    const int dim = detail::read_pod<std::int32_t>(is, "dim");
    if (steps < 1 || paths < 0 || dim < 1)
        throw ConfigError("state cache header is malformed: " + path);
    StateEnsemble st;
    st.grid = TimeGrid{horizon, steps};
    st.state_dim = dim;
    st.values.reserve(static_cast<std::size_t>(paths));
    for (int p = 0; p < paths; ++p) {
        MatrixXd m(steps + 1, dim);
        for (int k = 0; k <= steps; ++k)
            for (int i = 0; i < dim; ++i) m(k, i) = detail::read_pod<double>(is, "state");
        st.values.push_back(std::move(m));
    }
    return st;
}

// --------------------------------------------------------------------------
// CSV exports (long format).

/// Writes any per-path matrix family as `path,step,coordinate,value` rows.
inline void write_ensemble_csv(const std::string& path, const std::vector<MatrixXd>& values) {
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot open CSV for writing: " + path);
    os << "path,step,coordinate,value\n";
    for (std::size_t p = 0; p < values.size(); ++p)
        for (int k = 0; k < values[p].rows(); ++k)
            for (int i = 0; i < values[p].cols(); ++i)
                os << p << ',' << k << ',' << i << ','
                   << detail::format_full(values[p](k, i)) << '\n';
    if (!os) throw ConfigError("CSV write failed: " + path);
}

inline void write_state_csv(const std::string& path, const StateEnsemble& states) {
    write_ensemble_csv(path, states.values);
}

/// Adjoint triple as three files sharing the state CSV layout; the r file
/// interleaves marks in the coordinate column (coordinate = i*dim + j).
inline void write_adjoint_csv(const std::string& stem, const AdjointEnsemble& adj) {
    write_ensemble_csv(stem + "_p.csv", adj.p);
    write_ensemble_csv(stem + "_q.csv", adj.q);
    write_ensemble_csv(stem + "_r.csv", adj.r);
}

inline void write_trace_csv(const std::string& path, const std::vector<OptimizeTraceRow>& trace) {
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot open trace CSV for writing: " + path);
    os << "iteration,J,stderr,residual,step_size\n";
    for (const auto& row : trace)
        os << row.iteration << ',' << detail::format_full(row.cost_value) << ','
           << detail::format_full(row.cost_stderr) << ',' << detail::format_full(row.residual)
           << ',' << detail::format_full(row.step) << '\n';
    if (!os) throw ConfigError("trace CSV write failed: " + path);
}

// --------------------------------------------------------------------------
// Control law text format, version 1.
//
//   seectl-control 1
//   kind <open_loop|linear_feedback|tabulated>
//   steps <n>
//   udim <U>
//   box <0|1>
//   [lo <U values>]      (only when box = 1)
//   [hi <U values>]
//   open_loop:        table, n rows of U values
//   linear_feedback:  per step, one row "gain" (U*N values, row-major,
//                     prefixed by N) and one row "offset" (U values)
//   tabulated:        "paths <M>", then per path n rows of U values

inline void write_control_law(const std::string& path, const ControlLaw& law) {
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot open control file for writing: " + path);
    os << "seectl-control 1\n";
    const char* kind = law.kind() == ControlLaw::Kind::open_loop ? "open_loop"
                       : law.kind() == ControlLaw::Kind::linear_feedback ? "linear_feedback"
                                                                         : "tabulated";
    os << "kind " << kind << "\n";
    os << "steps " << law.steps() << "\n";
    os << "udim " << law.udim() << "\n";
    os << "box " << (law.has_box() ? 1 : 0) << "\n";
    auto write_row = [&os](const VectorXd& v) {
        for (int i = 0; i < v.size(); ++i)
            os << (i ? " " : "") << detail::format_full(v[i]);
        os << "\n";
    };
    if (law.has_box()) {
        os << "lo ";
        write_row(law.box_lo());
        os << "hi ";
        write_row(law.box_hi());
    }
    switch (law.kind()) {
        case ControlLaw::Kind::open_loop:
            for (int k = 0; k < law.steps(); ++k)
                write_row(law.open_table().row(k).transpose());
            break;
        case ControlLaw::Kind::linear_feedback: {
            const int N = static_cast<int>(law.gains().front().cols());
            os << "state_dim " << N << "\n";
            for (int k = 0; k < law.steps(); ++k) {
                os << "gain ";
                VectorXd flat(law.udim() * N);
                for (int r = 0; r < law.udim(); ++r)
                    flat.segment(r * N, N) = law.gains()[k].row(r).transpose();
                write_row(flat);
                os << "offset ";
                write_row(law.offsets()[k]);
            }
            break;
        }
        case ControlLaw::Kind::tabulated:
            os << "paths " << law.tables().size() << "\n";
            for (const auto& tab : law.tables())
                for (int k = 0; k < law.steps(); ++k) write_row(tab.row(k).transpose());
            break;
    }
    if (!os) throw ConfigError("control file write failed: " + path);
}

inline ControlLaw read_control_law(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open control file: " + path);
    std::string word;
    int version = 0;
    is >> word >> version;
    if (word != "seectl-control" || version != 1)
        throw ConfigError("control file has wrong header: " + path);
    std::string kind;
    int steps = 0, udim = 0, boxed = 0;
    is >> word >> kind;
    if (word != "kind") throw ConfigError("control file: expected kind");
    is >> word >> steps;
    if (word != "steps" || steps < 1) throw ConfigError("control file: bad steps");
    is >> word >> udim;
    if (word != "udim" || udim < 1) throw ConfigError("control file: bad udim");
    is >> word >> boxed;
    if (word != "box") throw ConfigError("control file: expected box flag");
    auto read_vec = [&is, &path](int len) {
        VectorXd v(len);
        for (int i = 0; i < len; ++i)
            if (!(is >> v[i])) throw ConfigError("control file truncated: " + path);
        return v;
    };
    VectorXd lo, hi;
    if (boxed) {
        is >> word;
        if (word != "lo") throw ConfigError("control file: expected lo");
        lo = read_vec(udim);
        is >> word;
        if (word != "hi") throw ConfigError("control file: expected hi");
        hi = read_vec(udim);
    }
    ControlLaw law = ControlLaw::zero(steps, udim);
    if (kind == "open_loop") {
        MatrixXd table(steps, udim);
        for (int k = 0; k < steps; ++k) table.row(k) = read_vec(udim).transpose();
        law = ControlLaw::open_loop(std::move(table));
    } else if (kind == "linear_feedback") {
        int N = 0;
        is >> word >> N;
        if (word != "state_dim" || N < 1) throw ConfigError("control file: bad state_dim");
        std::vector<MatrixXd> gains;
        std::vector<VectorXd> offsets;
        for (int k = 0; k < steps; ++k) {
            is >> word;
            if (word != "gain") throw ConfigError("control file: expected gain");
            const VectorXd flat = read_vec(udim * N);
            MatrixXd K(udim, N);
            for (int r = 0; r < udim; ++r) K.row(r) = flat.segment(r * N, N).transpose();
            gains.push_back(std::move(K));
            is >> word;
            if (word != "offset") throw ConfigError("control file: expected offset");
            offsets.push_back(read_vec(udim));
        }
        law = ControlLaw::linear_feedback(std::move(gains), std::move(offsets));
    } else if (kind == "tabulated") {
        int paths = 0;
        is >> word >> paths;
        if (word != "paths" || paths < 1) throw ConfigError("control file: bad paths");
        StateEnsemble shape;
        shape.grid = TimeGrid{1.0, steps};
        shape.state_dim = 1;
        shape.values.assign(static_cast<std::size_t>(paths), MatrixXd::Zero(steps + 1, 1));
        std::vector<MatrixXd> tabs;
        for (int p = 0; p < paths; ++p) {
            MatrixXd tab(steps, udim);
            for (int k = 0; k < steps; ++k) tab.row(k) = read_vec(udim).transpose();
            tabs.push_back(std::move(tab));
        }
        law = ControlLaw::tabulated(shape, udim, [&tabs](int p, int k, const auto&) {
            return tabs[static_cast<std::size_t>(p)].row(k).transpose();
        });
    } else {
        throw ConfigError("control file: unknown kind " + kind);
    }
    return boxed ? law.with_box(std::move(lo), std::move(hi)) : law;
}

// --------------------------------------------------------------------------
// Config hashing and run manifest.

/// FNV-1a over the raw bytes, rendered as 16 hex digits.
inline std::string fnv1a_hex(const std::string& bytes) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("cannot open file: " + path);
    std::string out((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return out;
}

/// Reproducibility manifest: everything needed to regenerate the artifacts
/// bit-exactly.  Deliberately carries no timestamps, host data, or thread
/// counts (results are thread-count invariant).
inline nlohmann::json make_manifest(const std::string& subcommand, const std::string& config_hash,
                                    std::uint64_t seed,
                                    const std::vector<std::string>& artifacts) {
    nlohmann::json j;
    j["format"] = "seectl-manifest";
    j["format_version"] = 1;
    j["tool_version"] = "1.0.0";
    j["subcommand"] = subcommand;
    j["config_hash"] = config_hash;
    j["seed"] = seed;
    j["artifacts"] = artifacts;
    return j;
}

inline void write_json_file(const std::string& path, const nlohmann::json& j) {
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot open JSON for writing: " + path);
    os << j.dump(2) << "\n";
    if (!os) throw ConfigError("JSON write failed: " + path);
}

// --------------------------------------------------------------------------
// Report serialization.

inline nlohmann::json coercivity_json(const CoercivityReport& r) {
    return {{"alpha", r.alpha},
            {"lambda_shift", r.lambda_shift},
            {"min_margin", r.min_margin},
            {"satisfied", r.satisfied}};
}

inline nlohmann::json estimate_json(const EstimateReport& r) {
    return {{"sup_h_sq", r.sup_h_sq},
            {"int_v_sq", r.int_v_sq},
            {"driver_mass", r.driver_mass},
            {"ratio", r.ratio}};
}

inline nlohmann::json verification_json(const VerificationReport& r) {
    return {{"convexity_ok", r.convexity_ok},
            {"stationarity_ok", r.stationarity_ok},
            {"optimality_ok", r.optimality_ok},
            {"worst_convexity_violation", r.worst_convexity_violation},
            {"residual", r.residual},
            {"worst_perturbation_z", r.worst_perturbation_z},
            {"all_ok", r.all_ok()}};
}

inline nlohmann::json example_report_json(const ExampleReport& r) {
    nlohmann::json stages = nlohmann::json::array();
    for (const auto& s : r.stages)
        stages.push_back({{"name", s.name}, {"ran", s.ran}, {"ok", s.ok}, {"detail", s.detail}});
    nlohmann::json j;
    j["ok"] = r.ok;
    j["stages"] = stages;
    j["coercivity"] = coercivity_json(r.coercivity);
    j["riccati_cost"] = r.riccati_cost;
    j["feedback_cost"] = {{"value", r.feedback_cost.value}, {"stderr", r.feedback_cost.stderr_}};
    j["closed_form"] = {{"riccati_sup_abs", r.riccati_gap.sup_abs},
                        {"regression_rel_rms", r.regression_gap.rel_rms}};
    j["smp_residual"] = r.smp;
    j["verification"] = verification_json(r.verification);
    j["optimize"] = {{"converged", r.optimize.converged},
                     {"failure_reason", r.optimize.failure_reason},
                     {"final_cost", r.optimize.final_cost.value},
                     {"iterations", r.optimize.trace.size()},
                     {"gain_rel_rms", r.gain_rel_rms}};
    return j;
}

}  // namespace seectl
