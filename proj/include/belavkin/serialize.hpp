// belavkin-lab: file formats for trajectory and SDE-path output.
//
// Both writers emit the same columnar schema so discrete trajectories and
// continuous paths can be compared row-by-row: header comment lines carrying
// the schema version, the model digest and the generator seed/stream, a
// column-name row, then one row per stored state
//   k, t, outcome, x columns, re/im of each of the four 2x2 entries.
// SDE paths add a trailing `scheme` column.  The optional timestamp argument
// adds a `# generated=...` line; the CLI omits it in deterministic mode so
// identical runs produce byte-identical files.

#pragma once

#include <cstdint>
#include <string>

#include "belavkin/continuous.hpp"
#include "belavkin/discrete.hpp"

namespace belavkin {

inline constexpr int kSchemaVersion = 1;

// 16-digit zero-padded lowercase hex; the rendering used everywhere a model
// digest appears in an output file.
std::string digest_hex(std::uint64_t digest);

// Row k = 0 is the initial state (outcome -1, x columns 0); row k >= 1 holds
// the outcome and normalized increment of step k.  Models with three noise
// increments per step get columns x1,x2,x3 instead of x.
std::string trajectory_csv(const TrajectoryRecord& record,
                           const std::string& timestamp = "");
std::string trajectory_json(const TrajectoryRecord& record);

// Same schema as trajectory_csv with outcome fixed at -1, the x columns
// carrying the driver increments applied on the step ending at each row's
// time (0 on the first row, and on all rows when increments were not
// recorded or the path was stored with a stride), plus a `scheme` column.
std::string sde_csv(const SdePath& path, std::uint64_t model_digest,
                    const std::string& timestamp = "");
std::string sde_json(const SdePath& path, std::uint64_t model_digest);

}  // namespace belavkin
