#pragma once

#include <array>
#include <chrono>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "evidenceflow/error.hpp"

namespace evidenceflow::sim {

using Minutes = std::chrono::minutes;
// Wall-clock time in the lab's local time zone, minute resolution.
using LocalTime = std::chrono::local_time<Minutes>;

struct WorkCalendar {
  Minutes day_start{8 * 60};
  Minutes day_end{17 * 60};
  // Indexed by weekday c_encoding (0 = Sunday).
  std::array<bool, 7> workdays{false, true, true, true, true, true, false};
  std::chrono::local_days anchor_date{std::chrono::year{2014} / std::chrono::July / 1};

  bool is_workday(std::chrono::local_days day) const;
  // Inside [day_start, day_end) on a workday.
  bool is_working_instant(LocalTime t) const;
  // 1-based day number relative to anchor_date.
  long day_number(LocalTime t) const;
};

// t itself when it is a working instant, otherwise day_start of the next
// working moment (later today if before day_start on a workday).
LocalTime next_permitted_start(LocalTime t, const WorkCalendar& calendar);

enum class ResourceKind { HumanGated, AlwaysOn };
enum class Discipline { FifoByReady, ListedOrder };

std::string_view to_string(ResourceKind kind);
std::string_view to_string(Discipline discipline);

struct ResourceSpec {
  std::string name;
  std::string label;  // column header; defaults to name
  ResourceKind kind = ResourceKind::HumanGated;
  Discipline discipline = Discipline::FifoByReady;
  Minutes turnaround{0};
};

struct DeviceTask {
  std::string device_name;
  std::string station;  // resource that images this device
  Minutes imaging_duration{0};
  Minutes copy_duration{0};  // between imaging end and prep readiness
  std::vector<std::pair<std::string, Minutes>> prep_durations;  // tool -> duration
};

struct Scenario {
  WorkCalendar calendar;
  LocalTime start{};
  std::vector<ResourceSpec> resources;
  std::vector<DeviceTask> devices;
  std::vector<std::pair<std::string, std::string>> tool_resources;  // tool -> resource

  // Explicit mapping, else a resource with the tool's name.
  std::optional<std::string> resource_for_tool(std::string_view tool) const;
  const ResourceSpec* find_resource(std::string_view name) const;
};

class ScenarioError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

// Sectioned key=value text with [calendar], [resource], [tool] and [device]
// blocks. Throws ScenarioError (with line numbers where known).
Scenario parse_scenario(std::string_view text);
Scenario load_scenario(const std::filesystem::path& path);
void validate_scenario(const Scenario& scenario);

enum class TaskKind { Imaging, Preparation };

struct TimelineEntry {
  std::string device;
  std::string resource;
  std::string tool;  // empty for imaging
  TaskKind kind = TaskKind::Imaging;
  LocalTime start{};
  LocalTime end{};

  bool operator==(const TimelineEntry&) const = default;
};

struct Metrics {
  Minutes makespan{0};
  std::optional<Minutes> first_result_raw;
  std::optional<LocalTime> first_result_available;

  double makespan_hours() const;
  std::optional<double> first_result_raw_hours() const;
};

struct Timeline {
  LocalTime origin{};
  std::vector<TimelineEntry> entries;  // in scheduling order
  std::vector<std::string> device_order;
  std::vector<std::pair<std::string, std::string>> columns;  // resource name, label

  bool operator==(const Timeline&) const = default;
};

// Deterministic event-driven schedule. A human-gated resource starts a task
// at next_permitted_start(max(ready, free)) (+ turnaround, re-gated if that
// leaves working hours); an always-on resource at max(ready, free). Tasks run
// to completion regardless of hours.
Timeline simulate(const Scenario& scenario);

Metrics metrics(const Timeline& timeline, const WorkCalendar& calendar);

struct Savings {
  std::optional<double> first_result;  // 1 - automated / traditional
  std::optional<double> makespan;

  // Tenths of a percent (65.1) and whole percent (65).
  static double tenths_percent(double fraction);
  static long whole_percent(double fraction);
};

Savings compare(const Metrics& traditional, const Metrics& automated);

// "July 1, 8:00 AM"; midnight hour renders as "0:40 AM".
std::string format_cell_time(LocalTime t);

// Markdown table: one row per device, one column per resource, cells
// "start / stop".
std::string render_table(const Timeline& timeline);

// `metrics:` header followed by key=value lines.
std::string render_metrics(const Metrics& metrics, const WorkCalendar& calendar);
std::string render_savings(const Savings& savings);

// Synthetic scenarios from imaging durations and per-tool prep ratios.
// Ratios from the reference timelines: case processor and IEF take
// 2x the imaging time, Bulk Extractor 0.2x.
struct PrepRatio {
  std::string tool;
  double ratio = 1.0;
  ResourceKind kind = ResourceKind::AlwaysOn;
  Discipline discipline = Discipline::FifoByReady;
};

inline const std::vector<PrepRatio> kTraditionalPrepRatios = {
    {"encase", 2.0, ResourceKind::HumanGated, Discipline::ListedOrder}};
inline const std::vector<PrepRatio> kAutomatedPrepRatios = {
    {"ief", 2.0, ResourceKind::AlwaysOn, Discipline::FifoByReady},
    {"bulk_extractor", 0.2, ResourceKind::AlwaysOn, Discipline::FifoByReady}};

// Devices are spread round-robin over `stations` human-gated imaging stations.
Scenario synthesize_scenario(const std::vector<std::pair<std::string, Minutes>>& devices,
                             int stations, const std::vector<PrepRatio>& ratios,
                             const WorkCalendar& calendar = {});

// "2014-07-01 08:00" or "2014-07-01T08:00".
std::optional<LocalTime> parse_local_time(std::string_view text);
std::string format_local_time(LocalTime t);

}  // namespace evidenceflow::sim
