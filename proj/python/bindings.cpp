#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>
#include <stdexcept>

#include "evidenceflow/archiver.hpp"
#include "evidenceflow/cli.hpp"
#include "evidenceflow/digest.hpp"
#include "evidenceflow/scheduler.hpp"

namespace py = pybind11;
using namespace evidenceflow;

namespace {

py::tuple run(const std::vector<std::string>& args, const std::string& input) {
  std::vector<std::string> full{"evidenceflow"};
  full.insert(full.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : full) argv.push_back(a.c_str());
  std::istringstream in(input);
  std::ostringstream out, err;
  CliContext ctx;
  ctx.in = &in;
  ctx.out = &out;
  ctx.err = &err;
  int code = 0;
  {
    py::gil_scoped_release release;
    code = run_cli(static_cast<int>(argv.size()), argv.data(), ctx);
  }
  return py::make_tuple(code, out.str(), err.str());
}

py::dict metrics_dict(const sim::Metrics& m, const sim::WorkCalendar& calendar) {
  py::dict d;
  d["makespan_minutes"] = m.makespan.count();
  d["makespan_hours"] = m.makespan_hours();
  d["first_result_raw_minutes"] = m.first_result_raw ? py::cast(m.first_result_raw->count()) : py::none();
  d["first_result_raw_hours"] = m.first_result_raw ? py::cast(*m.first_result_raw_hours()) : py::none();
  d["first_result_available"] =
      m.first_result_available ? py::cast(sim::format_local_time(*m.first_result_available)) : py::none();
  d["first_result_available_day"] =
      m.first_result_available ? py::cast(calendar.day_number(*m.first_result_available)) : py::none();
  return d;
}

py::dict simulate(const std::string& path) {
  const auto scenario = sim::load_scenario(path);
  const auto timeline = sim::simulate(scenario);
  py::dict d = metrics_dict(sim::metrics(timeline, scenario.calendar), scenario.calendar);
  py::list entries;
  for (const auto& e : timeline.entries) {
    py::dict row;
    row["device"] = e.device;
    row["resource"] = e.resource;
    row["tool"] = e.tool;
    row["start"] = sim::format_local_time(e.start);
    row["end"] = sim::format_local_time(e.end);
    entries.append(row);
  }
  d["entries"] = entries;
  d["table"] = sim::render_table(timeline);
  return d;
}

py::dict compare(const std::string& traditional, const std::string& automated) {
  const auto a = sim::load_scenario(traditional);
  const auto b = sim::load_scenario(automated);
  const auto s = sim::compare(sim::metrics(sim::simulate(a), a.calendar), sim::metrics(sim::simulate(b), b.calendar));
  py::dict d;
  d["first_result_saving_pct"] = s.first_result ? py::cast(sim::Savings::tenths_percent(*s.first_result)) : py::none();
  d["first_result_saving_rounded"] =
      s.first_result ? py::cast(sim::Savings::whole_percent(*s.first_result)) : py::none();
  d["makespan_saving_pct"] = s.makespan ? py::cast(sim::Savings::tenths_percent(*s.makespan)) : py::none();
  d["makespan_saving_rounded"] = s.makespan ? py::cast(sim::Savings::whole_percent(*s.makespan)) : py::none();
  return d;
}

std::string next_permitted_start(const std::string& local_time) {
  const auto t = sim::parse_local_time(local_time);
  if (!t) throw py::value_error("expected \"YYYY-MM-DD hh:mm\": " + local_time);
  return sim::format_local_time(sim::next_permitted_start(*t, sim::WorkCalendar{}));
}

}  // namespace

PYBIND11_MODULE(evidenceflow, m) {
  m.doc() = "Forensic evidence workflow toolkit";
  m.attr("__version__") = "0.1.0";

  const auto& error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", error.ptr());

  m.def("run_cli", &run, py::arg("args"), py::arg("input") = "",
        "Run a CLI command in-process; returns (exit_code, stdout, stderr).");
  m.def("simulate", &simulate, py::arg("scenario"), "Simulate a scenario file; metrics, entries and table.");
  m.def("compare", &compare, py::arg("traditional"), py::arg("automated"));
  m.def("next_permitted_start", &next_permitted_start, py::arg("local_time"),
        "Next working instant under the default calendar (Mon-Fri 08:00-17:00).");
  m.def("sha256_file", [](const std::string& path) { return sha256_file(path); }, py::arg("path"));
  m.def("glob_match", [](const std::string& pattern, const std::string& path) { return glob_match(pattern, path); },
        py::arg("pattern"), py::arg("path"));
}
