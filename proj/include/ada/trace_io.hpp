#pragma once

// Run outputs: trace CSV (read and write), aggregate JSON, plot series,
// comparison grid, posterior dump and run manifest.

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ada/ada_loop.hpp"
#include "ada/config.hpp"

namespace ada {

inline constexpr int kFormatVersion = 1;
inline constexpr std::string_view kProgramVersion = "0.1.0";

inline constexpr std::string_view kTraceCsvHeader =
    "operator,game_index,game_id,trial,ctx_ha,ctx_la,ctx_pa,ctx_hb,ctx_lb,ctx_pb,initial,predicted,suggestion,"
    "optimal,agreement,d,d_ind,final,payoff,foregone,capability,rho,preference,preference_ind,ambiguous";

// Shortest round-trip decimal form; "nan" for NaN.
std::string format_real(double v);

// Records of every trace, operator-major. Byte-stable for identical input.
std::string format_trace_csv(std::span<const OperatorTrace> traces);
void write_trace_csv(const std::filesystem::path& path, std::span<const OperatorTrace> traces);

// Columns are matched by header name; `required` names must be present.
// Missing optional columns keep InteractionRecord defaults.
std::vector<InteractionRecord> parse_trace_csv(std::string_view text,
                                               std::span<const std::string_view> required = {});
std::vector<InteractionRecord> read_trace_csv(const std::filesystem::path& path,
                                              std::span<const std::string_view> required = {});

// Columns abc-diagnose needs.
inline constexpr std::string_view kObservationColumns[] = {"operator", "d", "agreement", "capability"};

nlohmann::ordered_json record_to_json(const InteractionRecord& r);
nlohmann::ordered_json aggregate_to_json(const PopulationAggregate& agg);
nlohmann::ordered_json abc_updates_to_json(std::span<const OperatorTrace> traces);

// game,mean_d,std_d,mean_rho,std_rho
std::string format_series_csv(const PopulationAggregate& agg);

std::string format_compare_csv(std::span<const CompareCell> cells);
nlohmann::ordered_json compare_to_json(std::span<const CompareCell> cells, const CompareGrid& grid);

// b1,b2,s,theta,distance
std::string format_posterior_csv(std::span<const PosteriorSample> samples);

nlohmann::ordered_json make_manifest(const std::string& command, const RunConfig& config,
                                     const std::vector<std::string>& outputs);

// Writes via a temporary file and rename so readers never see partial output.
void write_text(const std::filesystem::path& path, std::string_view text);
void write_json(const std::filesystem::path& path, const nlohmann::ordered_json& j);

}  // namespace ada
