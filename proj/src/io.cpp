#include "nlmodal/io.hpp"

#include <cmath>
#include <sstream>

#include "nlmodal/error.hpp"

namespace nlmodal {

namespace {

std::string num(double v) { return format_number(v); }
std::string num(int v) { return format_number(static_cast<long long>(v)); }

std::string join(const std::vector<double>& xs) {
    std::string s;
    for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? ";" : "") + num(xs[i]);
    return s;
}

std::vector<double> split_numbers(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ';'))
        if (!item.empty()) out.push_back(std::stod(item));
    return out;
}

int meta_int(const CsvTable& t, const std::string& key) {
    const std::string v = t.meta(key);
    if (v.empty()) fail(ErrorCode::Schema, "missing '" + key + "' in table comments");
    return std::stoi(v);
}

}  // namespace

CsvTable backbone_table(const BackboneReference& ref, const HbmProblem& problem,
                        const AmplitudeAxis& axis) {
    const int H = problem.H;
    const int n = problem.model.nmod();
    const double w0 = problem.model.omega()(problem.mode);
    CsvTable t;
    t.comments.push_back("table=backbone-reference");
    t.comments.push_back("H=" + num(H));
    t.comments.push_back("nmod=" + num(n));
    t.comments.push_back("omega_linear=" + num(w0));
    t.comments.push_back("complete=" + std::string(ref.complete ? "true" : "false"));
    if (!ref.message.empty()) t.comments.push_back("message=" + ref.message);
    t.add_column("a", "modal amplitude");
    t.add_column("omega", "modal frequency [rad/s]");
    t.add_column("D", "modal damping ratio");
    t.add_column("omega_ratio", "omega over the linear frequency of the tracked mode");
    t.add_column(axis.label, "fundamental deflection magnitude at x = " + num(axis.x) + " m over " + num(axis.scale) + " m");
    t.add_column("residual", "final Newton residual norm");
    t.add_column("iterations", "Newton iterations");
    for (int h = 0; h <= H; ++h)
        for (int j = 0; j < n; ++j) {
            const std::string base = "v_h" + num(h) + "_m" + num(j + 1);
            t.add_column(base + "_re", h == 0 && j == 0 ? "mass-normalized modal coordinates per harmonic (real part)" : "");
            t.add_column(base + "_im", h == 0 && j == 0 ? "imaginary part" : "");
        }
    for (std::size_t i = 0; i < ref.points.size(); ++i) {
        const auto& p = ref.points[i];
        std::vector<std::string> r{num(p.a), num(p.omega), num(p.D), num(p.omega / w0),
                                   num(std::abs(deflection_fundamental(problem.model, p, axis.x)) / axis.scale),
                                   num(ref.diagnostics[i].residual_norm), num(ref.diagnostics[i].iterations)};
        for (int h = 0; h <= H; ++h)
            for (int j = 0; j < n; ++j) {
                r.push_back(num(p.vhat(h, j).real()));
                r.push_back(num(p.vhat(h, j).imag()));
            }
        t.add_row(std::move(r));
    }
    return t;
}

BackboneReference backbone_from_table(const CsvTable& t) {
    const int H = meta_int(t, "H");
    const int n = meta_int(t, "nmod");
    BackboneReference ref;
    ref.complete = t.meta("complete") == "true";
    ref.message = t.meta("message");
    const auto a = t.numeric("a"), omega = t.numeric("omega"), D = t.numeric("D");
    const auto res = t.numeric("residual"), it = t.numeric("iterations");
    std::vector<std::vector<double>> re, im;
    for (int h = 0; h <= H; ++h)
        for (int j = 0; j < n; ++j) {
            const std::string base = "v_h" + num(h) + "_m" + num(j + 1);
            re.push_back(t.numeric(base + "_re"));
            im.push_back(t.numeric(base + "_im"));
        }
    for (std::size_t i = 0; i < a.size(); ++i) {
        BackbonePoint p;
        p.a = a[i];
        p.omega = omega[i];
        p.D = D[i];
        p.vhat.resize(H + 1, n);
        for (int h = 0; h <= H; ++h)
            for (int j = 0; j < n; ++j) {
                const auto k = static_cast<std::size_t>(h * n + j);
                p.vhat(h, j) = cdouble(re[k][i], im[k][i]);
            }
        ref.points.push_back(std::move(p));
        ref.diagnostics.push_back({res[i], static_cast<int>(it[i])});
    }
    return ref;
}

CsvTable test_record_table(const TestRecord& record) {
    const int ns = static_cast<int>(record.sensor_positions.size());
    const int H = record.H;
    CsvTable t;
    t.comments.push_back("table=test-record");
    t.comments.push_back("H=" + num(H));
    t.comments.push_back("sensor_positions=" + join(record.sensor_positions));
    t.comments.push_back("reference_channel=" + num(record.reference_channel));
    t.add_column("level", "commanded base level (displacement [m] or velocity [m/s])");
    t.add_column("target_phase", "PLL set point [rad]");
    t.add_column("Omega", "mean excitation frequency over the hold window [rad/s]");
    t.add_column("locked", "1 if the phase error stayed within tolerance");
    t.add_column("qb_re", "fundamental base displacement, real part [m]");
    t.add_column("qb_im", "fundamental base displacement, imaginary part [m]");
    t.add_column("phase_error_mean", "mean phase error over the hold window [rad]");
    t.add_column("phase_error_max", "largest phase error magnitude over the hold window [rad]");
    t.add_column("base_distortion", "distortion factor of the base acceleration");
    t.add_column("base_velocity", "fundamental base velocity magnitude [m/s]");
    t.add_column("saturated", "1 if the level controller hit its limit");
    for (int i = 0; i < ns; ++i)
        for (int h = 0; h <= H; ++h) {
            const std::string base = "s" + num(i + 1) + "_h" + num(h);
            const bool first = i == 0 && h == 0;
            t.add_column(base + "_re", first ? "relative displacement harmonics per sensor, real part [m]" : "");
            t.add_column(base + "_im", first ? "imaginary part [m]" : "");
        }
    for (const auto& lv : record.levels) {
        std::vector<std::string> r{num(lv.level), num(lv.target_phase), num(lv.Omega), num(lv.locked ? 1 : 0),
                                   num(lv.qb_hat.real()), num(lv.qb_hat.imag()), num(lv.phase_error_mean),
                                   num(lv.phase_error_max), num(lv.base_distortion), num(lv.base_velocity),
                                   num(lv.amplitude_saturated ? 1 : 0)};
        for (int i = 0; i < ns; ++i)
            for (int h = 0; h <= H; ++h) {
                r.push_back(num(lv.sensors.at(i, h).real()));
                r.push_back(num(lv.sensors.at(i, h).imag()));
            }
        t.add_row(std::move(r));
    }
    return t;
}

TestRecord test_record_from_table(const CsvTable& t) {
    if (t.meta("table") != "test-record") fail(ErrorCode::Schema, "table is not a test record");
    TestRecord rec;
    rec.H = meta_int(t, "H");
    rec.sensor_positions = split_numbers(t.meta("sensor_positions"));
    rec.reference_channel = meta_int(t, "reference_channel");
    const int ns = static_cast<int>(rec.sensor_positions.size());
    const auto level = t.numeric("level"), phase = t.numeric("target_phase"), Om = t.numeric("Omega");
    const auto locked = t.numeric("locked"), qr = t.numeric("qb_re"), qi = t.numeric("qb_im");
    const auto em = t.numeric("phase_error_mean"), ex = t.numeric("phase_error_max");
    const auto dist = t.numeric("base_distortion"), bv = t.numeric("base_velocity"), sat = t.numeric("saturated");
    std::vector<std::vector<double>> re, im;
    for (int i = 0; i < ns; ++i)
        for (int h = 0; h <= rec.H; ++h) {
            const std::string base = "s" + num(i + 1) + "_h" + num(h);
            re.push_back(t.numeric(base + "_re"));
            im.push_back(t.numeric(base + "_im"));
        }
    for (std::size_t k = 0; k < level.size(); ++k) {
        LevelRecord lv;
        lv.level = level[k];
        lv.target_phase = phase[k];
        lv.Omega = Om[k];
        lv.locked = locked[k] != 0.0;
        lv.qb_hat = cdouble(qr[k], qi[k]);
        lv.phase_error_mean = em[k];
        lv.phase_error_max = ex[k];
        lv.base_distortion = dist[k];
        lv.base_velocity = bv[k];
        lv.amplitude_saturated = sat[k] != 0.0;
        lv.sensors.Omega = Om[k];
        lv.sensors.H = rec.H;
        lv.sensors.coeffs.resize(ns, rec.H + 1);
        lv.sensors.residual_rms.setZero(ns);
        for (int i = 0; i < ns; ++i)
            for (int h = 0; h <= rec.H; ++h) {
                const auto c = static_cast<std::size_t>(i * (rec.H + 1) + h);
                lv.sensors.coeffs(i, h) = cdouble(re[c][k], im[c][k]);
            }
        rec.levels.push_back(std::move(lv));
    }
    return rec;
}

CsvTable identified_table(const IdentifiedBackbone& bb, double plot_scale) {
    const int ns = static_cast<int>(bb.sensor_positions.size());
    CsvTable t;
    t.comments.push_back("table=identified-backbone");
    t.comments.push_back("sensor_positions=" + join(bb.sensor_positions));
    t.comments.push_back("plot_scale=" + num(plot_scale));
    t.add_column("a", "modal amplitude");
    t.add_column("omega", "modal frequency [rad/s]");
    t.add_column("D", "modal damping ratio");
    t.add_column("theta", "modal phase in the base-real gauge [rad]");
    t.add_column("force_factor", "effective modal participation |v1^H M b|");
    t.add_column("qb", "fundamental base displacement magnitude [m]");
    t.add_column("level", "commanded base level");
    t.add_column("amp_plot", "plot amplitude (fundamental deflection over the axis scale)");
    t.add_column("method", "damping estimator");
    t.add_column("sensor_set", "sensor set id");
    t.add_column("quadrature", "quadrature rule of the model-free estimator");
    for (int i = 0; i < ns; ++i) {
        t.add_column("v1_s" + num(i + 1) + "_re", i == 0 ? "fundamental mass-normalized shape at the sensors, real part" : "");
        t.add_column("v1_s" + num(i + 1) + "_im", i == 0 ? "imaginary part" : "");
    }
    for (const auto& p : bb.points) {
        std::vector<std::string> r{num(p.a), num(p.omega), num(p.D), num(p.theta), num(p.force_factor),
                                   num(p.qb_hat), num(p.level), num(p.amp_plot / plot_scale),
                                   to_string(bb.method), bb.sensor_set, to_string(bb.quadrature)};
        for (int i = 0; i < ns; ++i) {
            const cdouble v = p.v.cols() > 1 ? p.v(i, 1) : cdouble(0.0);
            r.push_back(num(v.real()));
            r.push_back(num(v.imag()));
        }
        t.add_row(std::move(r));
    }
    return t;
}

IdentifiedBackbone identified_from_table(const CsvTable& t) {
    if (t.meta("table") != "identified-backbone") fail(ErrorCode::Schema, "table is not an identified backbone");
    IdentifiedBackbone bb;
    bb.sensor_positions = split_numbers(t.meta("sensor_positions"));
    const int ns = static_cast<int>(bb.sensor_positions.size());
    const std::string scale_text = t.meta("plot_scale");
    const double plot_scale = scale_text.empty() ? 1.0 : std::stod(scale_text);
    const auto a = t.numeric("a"), om = t.numeric("omega"), D = t.numeric("D"), th = t.numeric("theta");
    const auto ff = t.numeric("force_factor"), qb = t.numeric("qb"), lvl = t.numeric("level"), amp = t.numeric("amp_plot");
    const auto method = t.text("method"), set = t.text("sensor_set"), quad = t.text("quadrature");
    if (!method.empty()) {
        bb.method = method_from_string(method.front());
        bb.sensor_set = set.front();
        bb.quadrature = quadrature_from_string(quad.front());
    }
    std::vector<std::vector<double>> re, im;
    for (int i = 0; i < ns; ++i) {
        re.push_back(t.numeric("v1_s" + num(i + 1) + "_re"));
        im.push_back(t.numeric("v1_s" + num(i + 1) + "_im"));
    }
    for (std::size_t k = 0; k < a.size(); ++k) {
        IdentifiedPoint p;
        p.a = a[k];
        p.omega = om[k];
        p.D = D[k];
        p.theta = th[k];
        p.force_factor = ff[k];
        p.qb_hat = qb[k];
        p.level = lvl[k];
        p.amp_plot = amp[k] * plot_scale;
        p.v = Eigen::MatrixXcd::Zero(ns, 2);
        for (int i = 0; i < ns; ++i) p.v(i, 1) = cdouble(re[i][k], im[i][k]);
        bb.points.push_back(std::move(p));
    }
    return bb;
}

CsvTable frf_table(const ForcedResponse& response, const TableInterpolant& table,
                   int plot_channel, double plot_scale) {
    CsvTable t;
    t.comments.push_back("table=forced-response");
    t.comments.push_back("truncated=" + std::string(response.truncated ? "true" : "false"));
    if (response.peak_found) {
        t.comments.push_back("a_peak=" + num(response.a_peak));
        t.comments.push_back("Omega_peak=" + num(response.Omega_peak));
    }
    t.add_column("Omega", "excitation frequency [rad/s]");
    t.add_column("a", "modal amplitude");
    t.add_column("theta", "modal phase relative to the forcing [rad]");
    t.add_column("stability", "slow-flow fixed-point classification");
    t.add_column("level", "base excitation level");
    t.add_column("amp_plot", "plot amplitude at the plotting sensor");
    for (const auto& p : response.points) {
        double amp = 0.0;
        const ModalProperties m = table(p.a);
        if (plot_channel >= 0 && plot_channel < m.v1.size()) amp = p.a * std::abs(m.v1(plot_channel)) / plot_scale;
        t.add_row({num(p.Omega), num(p.a), num(p.theta), to_string(p.stability), num(p.level), num(amp)});
    }
    return t;
}

}  // namespace nlmodal
