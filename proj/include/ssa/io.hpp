#pragma once

#include <iosfwd>
#include <string>

#include "ssa/matrix.hpp"
#include "ssa/model.hpp"
#include "ssa/router.hpp"
#include "ssa/trainer.hpp"

namespace ssa {

// Feature file: magic "SSA1", u16 version (= 1), u32 rows, u32 cols, then
// rows*cols little-endian f32 values in row-major order. 14-byte header.
DenseMatrix read_feature_file(const std::string& path);
void write_feature_file(const std::string& path, const DenseMatrix& matrix);

// Model container: magic "SSAM", u16 version (= 1), u16 activation, u16
// flags (bit 0: residual), u16 mlp count, u32 section count, then named
// sections each holding one embedded feature record. Bias vectors are stored
// as single-row matrices. Values go through one f32 round-trip.
ModelParams read_model_params(const std::string& path);
void write_model_params(const std::string& path, const ModelParams& params);

// One line per patch: patch_index,slot_1,weight_1,slot_2,weight_2 (extra
// slot/weight pairs follow for larger top_k). Weights carry 9 significant
// digits.
void write_assignments(const std::string& path, const RoutingTable& table);

// Line-oriented deterministic text: a header line, config key=value lines,
// one record per epoch, and final metrics. No timestamps.
void write_train_report(std::ostream& out, const TrainReport& report);
void write_train_report(const std::string& path, const TrainReport& report);

} // namespace ssa
