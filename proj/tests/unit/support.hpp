#pragma once

#include <vector>

#include "nlmodal/beam_model.hpp"
#include "nlmodal/error.hpp"
#include "nlmodal/hbm_epmc.hpp"

namespace test {

using namespace nlmodal;

inline ModalBeamModel friction_beam(int nmod = 5) {
    BeamConfig c{Boundary::Cantilever, 12.49, 7.047, 0.7, nmod, std::vector<double>(nmod, 0.01)};
    return ModalBeamModel(c, Jenkins{0.3, 27.47 * 12.49 / (0.7 * 0.7 * 0.7), 1.0});
}

inline ModalBeamModel geometric_beam(int nmod = 5) {
    const double L = 0.14;
    BeamConfig c{Boundary::ClampedClamped, 0.245, 0.1078, L, nmod, std::vector<double>(nmod, 0.01)};
    const auto s = rectangular_section(c.EI, c.rhoA, 210e9, 7850.0);
    return ModalBeamModel(c, BendingStretching{s.EA / (2 * L)});
}

inline ModalBeamModel linear_cantilever(int nmod = 3) {
    BeamConfig c{Boundary::Cantilever, 12.49, 7.047, 0.7, nmod, std::vector<double>(nmod, 0.01)};
    return ModalBeamModel(c, std::monostate{});
}

inline HbmProblem friction_problem(int nmod = 5, int H = 7, double max_step = 0.02) {
    HbmProblem p{friction_beam(nmod), H, H <= 7 ? 128 : 256};
    p.continuation.a_start = 1e-3;
    p.continuation.a_end = 0.5;
    p.continuation.initial_step = max_step;
    p.continuation.max_step = max_step;
    return p;
}

inline HbmProblem geometric_problem(int nmod = 5, int H = 7) {
    HbmProblem p{geometric_beam(nmod), H, H <= 7 ? 128 : 256};
    p.continuation.a_start = 1e-7;
    p.continuation.a_end = 1e-4;
    p.continuation.max_step = 0.05;
    return p;
}

inline std::vector<double> sixths(int count, double L) {
    std::vector<double> xs;
    for (int i = 1; i <= count; ++i) xs.push_back(i * L / 6.0);
    return xs;
}

}  // namespace test
