#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "adu/distill/losses.hpp"

namespace adu::train {

inline constexpr char kRunLogHeader[] = "step,l_b,l_umr,l_umf,l_focal,p_d,total,seconds";

/// CSV writer; every row is flushed so a crashed run keeps its history.
/// Loss columns use 17 significant digits and parse back to the exact doubles.
class RunLog {
 public:
  explicit RunLog(const std::filesystem::path& path);
  void append(std::uint64_t step, const distill::LossBreakdown& b, double seconds);

  static std::string format_row(std::uint64_t step, const distill::LossBreakdown& b,
                                double seconds);

 private:
  std::ofstream out_;
  std::filesystem::path path_;
};

struct RunLogRow {
  std::uint64_t step = 0;
  double l_b = 0, l_umr = 0, l_umf = 0, l_focal = 0, p_d = 0, total = 0, seconds = 0;
};

/// Throws ParseError on a wrong header or malformed row.
std::vector<RunLogRow> read_run_log(const std::filesystem::path& path);

}  // namespace adu::train
