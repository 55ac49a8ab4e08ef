#include "adu/train/runlog.hpp"

#include <cstdio>
#include <sstream>

#include "adu/error.hpp"

namespace adu::train {

RunLog::RunLog(const std::filesystem::path& path) : out_(path, std::ios::trunc), path_(path) {
  if (!out_) throw std::runtime_error("cannot open run log " + path.string());
  out_ << kRunLogHeader << '\n';
  out_.flush();
}

std::string RunLog::format_row(std::uint64_t step, const distill::LossBreakdown& b,
                               double seconds) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%llu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.3f",
                static_cast<unsigned long long>(step), b.l_b, b.l_umr, b.l_umf, b.l_focal, b.p_d,
                b.total, seconds);
  return buf;
}

void RunLog::append(std::uint64_t step, const distill::LossBreakdown& b, double seconds) {
  out_ << format_row(step, b, seconds) << '\n';
  out_.flush();
  if (!out_) throw std::runtime_error("write failed on run log " + path_.string());
}

std::vector<RunLogRow> read_run_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open run log " + path.string());
  std::string line;
  std::size_t offset = 0;
  if (!std::getline(in, line) || line != kRunLogHeader) {
    throw ParseError("run log: unexpected header", 0);
  }
  offset += line.size() + 1;
  std::vector<RunLogRow> rows;
  while (std::getline(in, line)) {
    RunLogRow r;
    unsigned long long step = 0;
    char tail = 0;
    const int n = std::sscanf(line.c_str(), "%llu,%lf,%lf,%lf,%lf,%lf,%lf,%lf%c", &step, &r.l_b,
                              &r.l_umr, &r.l_umf, &r.l_focal, &r.p_d, &r.total, &r.seconds, &tail);
    if (n != 8) throw ParseError("run log: malformed row", offset);
    r.step = step;
    rows.push_back(r);
    offset += line.size() + 1;
  }
  return rows;
}

}  // namespace adu::train
