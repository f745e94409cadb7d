#pragma once

#include <string>
#include <vector>

#include "nlmodal/csv.hpp"
#include "nlmodal/hbm_epmc.hpp"
#include "nlmodal/identification.hpp"
#include "nlmodal/nmrom.hpp"
#include "nlmodal/test_record.hpp"

namespace nlmodal {

/// Plot amplitude |w(x)| / scale of the fundamental deflection at position x.
struct AmplitudeAxis {
    double x = 0.0;
    double scale = 1.0;
    std::string label = "amp";
};

CsvTable backbone_table(const BackboneReference& ref, const HbmProblem& problem,
                        const AmplitudeAxis& axis);
/// Points with all harmonics of v; H and mode count are read from the table comments.
BackboneReference backbone_from_table(const CsvTable& table);

CsvTable test_record_table(const TestRecord& record);
TestRecord test_record_from_table(const CsvTable& table);

CsvTable identified_table(const IdentifiedBackbone& backbone, double plot_scale);
IdentifiedBackbone identified_from_table(const CsvTable& table);

CsvTable frf_table(const ForcedResponse& response, const TableInterpolant& table,
                   int plot_channel, double plot_scale);

}  // namespace nlmodal
