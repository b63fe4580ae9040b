#include "evidenceflow/scheduler.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "evidenceflow/fsutil.hpp"
#include "evidenceflow/kvtext.hpp"

namespace evidenceflow::sim {

using namespace std::chrono;

bool WorkCalendar::is_workday(local_days day) const {
  return workdays[weekday{day}.c_encoding()];
}

bool WorkCalendar::is_working_instant(LocalTime t) const {
  const auto day = floor<days>(t);
  const auto tod = t - day;
  return is_workday(day) && tod >= day_start && tod < day_end;
}

long WorkCalendar::day_number(LocalTime t) const {
  return long((floor<days>(t) - anchor_date).count()) + 1;
}

LocalTime next_permitted_start(LocalTime t, const WorkCalendar& cal) {
  auto day = floor<days>(t);
  const auto tod = t - day;
  if (cal.is_workday(day)) {
    if (tod >= cal.day_start && tod < cal.day_end) return t;
    if (tod < cal.day_start) return day + cal.day_start;
  }
  // At most a week ahead, given at least one workday.
  for (int i = 0; i < 7; ++i) {
    day += days{1};
    if (cal.is_workday(day)) return day + cal.day_start;
  }
  throw ScenarioError("calendar has no workdays");
}

std::string_view to_string(ResourceKind kind) {
  return kind == ResourceKind::HumanGated ? "human_gated" : "always_on";
}

std::string_view to_string(Discipline d) {
  return d == Discipline::FifoByReady ? "fifo_by_ready" : "listed_order";
}

std::optional<std::string> Scenario::resource_for_tool(std::string_view tool) const {
  for (const auto& [t, r] : tool_resources)
    if (t == tool) return r;
  if (find_resource(tool)) return std::string(tool);
  return std::nullopt;
}

const ResourceSpec* Scenario::find_resource(std::string_view name) const {
  for (const auto& r : resources)
    if (r.name == name) return &r;
  return nullptr;
}

std::optional<LocalTime> parse_local_time(std::string_view s) {
  s = trim(s);
  if (s.size() != 16 || s[4] != '-' || s[7] != '-' || (s[10] != ' ' && s[10] != 'T') ||
      s[13] != ':')
    return std::nullopt;
  const auto num = [&](std::size_t pos, std::size_t n) -> std::optional<int> {
    int v = 0;
    const auto [end, ec] = std::from_chars(s.data() + pos, s.data() + pos + n, v);
    if (ec != std::errc{} || end != s.data() + pos + n) return std::nullopt;
    return v;
  };
  const auto y = num(0, 4), mo = num(5, 2), d = num(8, 2), h = num(11, 2), mi = num(14, 2);
  if (!y || !mo || !d || !h || !mi || *h > 23 || *mi > 59) return std::nullopt;
  const year_month_day ymd{year{*y}, month{unsigned(*mo)}, day{unsigned(*d)}};
  if (!ymd.ok()) return std::nullopt;
  return local_days{ymd} + hours{*h} + minutes{*mi};
}

std::string format_local_time(LocalTime t) {
  const auto day = floor<days>(t);
  const year_month_day ymd{day};
  const auto tod = t - day;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u %02ld:%02ld", int(ymd.year()),
                unsigned(ymd.month()), unsigned(ymd.day()), long(tod.count() / 60),
                long(tod.count() % 60));
  return buf;
}

namespace {

std::optional<Minutes> parse_clock(std::string_view s) {
  s = trim(s);
  const auto colon = s.find(':');
  if (colon == std::string_view::npos) return std::nullopt;
  int h = 0, m = 0;
  const auto hs = s.substr(0, colon), ms = s.substr(colon + 1);
  if (std::from_chars(hs.data(), hs.data() + hs.size(), h).ptr != hs.data() + hs.size() ||
      std::from_chars(ms.data(), ms.data() + ms.size(), m).ptr != ms.data() + ms.size() ||
      hs.empty() || ms.size() != 2 || h < 0 || h > 24 || m < 0 || m > 59 || (h == 24 && m != 0))
    return std::nullopt;
  return Minutes{h * 60 + m};
}

Minutes parse_minutes(const KvEntry& e) {
  long long v = 0;
  const auto [end, ec] = std::from_chars(e.value.data(), e.value.data() + e.value.size(), v);
  if (e.value.empty() || ec != std::errc{} || end != e.value.data() + e.value.size())
    throw ScenarioError("'" + e.key + "' must be an integer number of minutes", e.line);
  return Minutes{v};
}

int parse_weekday(std::string_view name, std::size_t line) {
  static constexpr std::array<std::string_view, 7> kNames = {"sun", "mon", "tue", "wed",
                                                             "thu", "fri", "sat"};
  std::string lower(trim(name).substr(0, 3));
  for (auto& c : lower) c = char(std::tolower(static_cast<unsigned char>(c)));
  for (std::size_t i = 0; i < kNames.size(); ++i)
    if (kNames[i] == lower) return int(i);
  throw ScenarioError("unknown weekday '" + std::string(name) + "'", line);
}

}  // namespace

Scenario parse_scenario(std::string_view text) {
  KvDocument doc;
  try {
    doc = parse_kv_document(text);
  } catch (const ConfigError& e) {
    throw ScenarioError(e.what());
  }
  if (!doc.root.entries.empty())
    throw ScenarioError("key outside of any section", doc.root.entries.front().line);

  Scenario sc;
  std::optional<LocalTime> start;
  std::set<std::string> device_names;
  for (const auto& sec : doc.sections) {
    if (sec.name == "calendar") {
      for (const auto& e : sec.entries) {
        if (e.key == "anchor_date") {
          const auto t = parse_local_time(e.value + " 00:00");
          if (!t) throw ScenarioError("anchor_date must be YYYY-MM-DD", e.line);
          sc.calendar.anchor_date = floor<days>(*t);
        } else if (e.key == "start") {
          start = parse_local_time(e.value);
          if (!start) throw ScenarioError("start must be 'YYYY-MM-DD hh:mm'", e.line);
        } else if (e.key == "day_start" || e.key == "day_end") {
          const auto m = parse_clock(e.value);
          if (!m) throw ScenarioError(e.key + " must be hh:mm", e.line);
          (e.key == "day_start" ? sc.calendar.day_start : sc.calendar.day_end) = *m;
        } else if (e.key == "workdays") {
          sc.calendar.workdays.fill(false);
          for (const auto& d : split_list(e.value)) sc.calendar.workdays[parse_weekday(d, e.line)] = true;
        } else {
          throw ScenarioError("unknown calendar key '" + e.key + "'", e.line);
        }
      }
    } else if (sec.name == "resource") {
      ResourceSpec r;
      r.name = sec.require("name").value;
      r.label = sec.get("label").value_or(r.name);
      for (const auto& e : sec.entries) {
        if (e.key == "name" || e.key == "label") continue;
        if (e.key == "kind") {
          if (e.value == "human_gated") r.kind = ResourceKind::HumanGated;
          else if (e.value == "always_on") r.kind = ResourceKind::AlwaysOn;
          else throw ScenarioError("kind must be human_gated or always_on", e.line);
        } else if (e.key == "discipline") {
          if (e.value == "fifo_by_ready") r.discipline = Discipline::FifoByReady;
          else if (e.value == "listed_order") r.discipline = Discipline::ListedOrder;
          else throw ScenarioError("discipline must be fifo_by_ready or listed_order", e.line);
        } else if (e.key == "turnaround_minutes") {
          r.turnaround = parse_minutes(e);
        } else {
          throw ScenarioError("unknown resource key '" + e.key + "'", e.line);
        }
      }
      if (sc.find_resource(r.name)) throw ScenarioError("duplicate resource '" + r.name + "'", sec.line);
      sc.resources.push_back(std::move(r));
    } else if (sec.name == "tool") {
      sc.tool_resources.emplace_back(sec.require("name").value, sec.require("resource").value);
    } else if (sec.name == "device") {
      DeviceTask d;
      d.device_name = sec.require("name").value;
      d.station = sec.require("station").value;
      d.imaging_duration = parse_minutes(sec.require("imaging_minutes"));
      for (const auto& e : sec.entries) {
        if (e.key == "name" || e.key == "station" || e.key == "imaging_minutes") continue;
        if (e.key == "copy_minutes") {
          d.copy_duration = parse_minutes(e);
        } else if (e.key.rfind("prep.", 0) == 0 && e.key.size() > 5) {
          d.prep_durations.emplace_back(e.key.substr(5), parse_minutes(e));
        } else {
          throw ScenarioError("unknown device key '" + e.key + "'", e.line);
        }
      }
      if (!device_names.insert(d.device_name).second)
        throw ScenarioError("duplicate device '" + d.device_name + "'", sec.line);
      sc.devices.push_back(std::move(d));
    } else {
      throw ScenarioError("unknown section [" + sec.name + "]", sec.line);
    }
  }
  sc.start = start.value_or(LocalTime{sc.calendar.anchor_date + sc.calendar.day_start});
  validate_scenario(sc);
  return sc;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const IoError&) {
    throw ScenarioError("cannot read scenario " + path.string());
  }
  try {
    return parse_scenario(text);
  } catch (const ScenarioError& e) {
    throw ScenarioError(path.string() + ": " + e.what());
  }
}

void validate_scenario(const Scenario& sc) {
  if (sc.calendar.day_start >= sc.calendar.day_end)
    throw ScenarioError("day_start must be before day_end");
  if (std::none_of(sc.calendar.workdays.begin(), sc.calendar.workdays.end(), [](bool b) { return b; }))
    throw ScenarioError("calendar has no workdays");
  for (const auto& r : sc.resources)
    if (r.kind == ResourceKind::AlwaysOn && r.turnaround.count() != 0)
      throw ScenarioError("always_on resource '" + r.name + "' cannot have a turnaround");
    else if (r.turnaround.count() < 0)
      throw ScenarioError("resource '" + r.name + "' has a negative turnaround");
  for (const auto& [tool, res] : sc.tool_resources)
    if (!sc.find_resource(res))
      throw ScenarioError("tool '" + tool + "' maps to unknown resource '" + res + "'");
  for (const auto& d : sc.devices) {
    if (!sc.find_resource(d.station))
      throw ScenarioError("device '" + d.device_name + "' uses unknown station '" + d.station + "'");
    if (d.imaging_duration.count() <= 0)
      throw ScenarioError("device '" + d.device_name + "' needs a positive imaging duration");
    if (d.copy_duration.count() < 0)
      throw ScenarioError("device '" + d.device_name + "' has a negative copy duration");
    for (const auto& [tool, dur] : d.prep_durations) {
      if (!sc.resource_for_tool(tool))
        throw ScenarioError("device '" + d.device_name + "': tool '" + tool + "' is not mapped to a resource");
      if (dur.count() <= 0)
        throw ScenarioError("device '" + d.device_name + "': tool '" + tool + "' needs a positive duration");
    }
  }
}

namespace {

struct Task {
  std::size_t device = 0;
  std::size_t resource = 0;
  std::string tool;
  TaskKind kind = TaskKind::Imaging;
  Minutes duration{0};
  std::optional<LocalTime> ready;
  std::vector<std::size_t> successors;  // prep tasks released by this imaging
  Minutes successor_delay{0};
  bool scheduled = false;
};

LocalTime gated_start(const ResourceSpec& r, LocalTime earliest, const WorkCalendar& cal) {
  if (r.kind == ResourceKind::AlwaysOn) return earliest;
  auto s = next_permitted_start(earliest, cal);
  if (r.turnaround.count() > 0) {
    const auto later = s + r.turnaround;
    s = cal.is_working_instant(later) ? later : next_permitted_start(later, cal);
  }
  return s;
}

}  // namespace

Timeline simulate(const Scenario& sc) {
  validate_scenario(sc);
  Timeline tl;
  tl.origin = sc.start;
  for (const auto& d : sc.devices) tl.device_order.push_back(d.device_name);
  for (const auto& r : sc.resources) tl.columns.emplace_back(r.name, r.label);

  std::map<std::string, std::size_t, std::less<>> resource_index;
  for (std::size_t i = 0; i < sc.resources.size(); ++i) resource_index[sc.resources[i].name] = i;

  // Tasks in listed order: devices in file order, imaging before its preps.
  std::vector<Task> tasks;
  std::vector<std::vector<std::size_t>> pending(sc.resources.size());
  for (std::size_t di = 0; di < sc.devices.size(); ++di) {
    const auto& d = sc.devices[di];
    const auto imaging = tasks.size();
    tasks.push_back({di, resource_index.at(d.station), {}, TaskKind::Imaging, d.imaging_duration,
                     sc.start, {}, d.copy_duration, false});
    pending[tasks[imaging].resource].push_back(imaging);
    for (const auto& [tool, dur] : d.prep_durations) {
      const auto idx = tasks.size();
      tasks.push_back({di, resource_index.at(*sc.resource_for_tool(tool)), tool,
                       TaskKind::Preparation, dur, std::nullopt, {}, Minutes{0}, false});
      tasks[imaging].successors.push_back(idx);
      pending[tasks[idx].resource].push_back(idx);
    }
  }

  std::vector<LocalTime> free_at(sc.resources.size(), sc.start);
  std::size_t remaining = tasks.size();
  while (remaining > 0) {
    // Earliest feasible decision over all resources. Readiness learned later
    // always lies after this instant, so the choice made here is final.
    std::optional<std::pair<LocalTime, std::size_t>> best;  // start, task
    for (std::size_t ri = 0; ri < sc.resources.size(); ++ri) {
      const auto& queue = pending[ri];
      if (queue.empty()) continue;
      const auto& res = sc.resources[ri];
      std::optional<std::pair<LocalTime, std::size_t>> cand;
      if (res.discipline == Discipline::ListedOrder) {
        const auto head = queue.front();
        if (!tasks[head].ready) continue;
        cand = {gated_start(res, std::max(free_at[ri], *tasks[head].ready), sc.calendar), head};
      } else {
        std::optional<LocalTime> min_ready;
        for (auto t : queue)
          if (tasks[t].ready && (!min_ready || *tasks[t].ready < *min_ready)) min_ready = tasks[t].ready;
        if (!min_ready) continue;
        const auto start = gated_start(res, std::max(free_at[ri], *min_ready), sc.calendar);
        // Earliest-ready task among those ready by the start; listed order breaks ties.
        std::optional<std::size_t> pick;
        for (auto t : queue)
          if (tasks[t].ready && *tasks[t].ready <= start &&
              (!pick || *tasks[t].ready < *tasks[*pick].ready))
            pick = t;
        cand = {start, *pick};
      }
      if (!best || cand->first < best->first) best = cand;
    }
    if (!best) throw ScenarioError("scenario cannot make progress (dependency cycle)");

    const auto [start, ti] = *best;
    auto& task = tasks[ti];
    auto& queue = pending[task.resource];
    queue.erase(std::find(queue.begin(), queue.end(), ti));
    task.scheduled = true;
    const auto end = start + task.duration;
    free_at[task.resource] = end;
    for (auto s : task.successors) tasks[s].ready = end + task.successor_delay;
    tl.entries.push_back({sc.devices[task.device].device_name, sc.resources[task.resource].name,
                          task.tool, task.kind, start, end});
    --remaining;
  }
  return tl;
}

double Metrics::makespan_hours() const { return double(makespan.count()) / 60.0; }

std::optional<double> Metrics::first_result_raw_hours() const {
  if (!first_result_raw) return std::nullopt;
  return double(first_result_raw->count()) / 60.0;
}

Metrics metrics(const Timeline& tl, const WorkCalendar& calendar) {
  Metrics m;
  if (tl.entries.empty()) return m;
  LocalTime last = tl.origin;
  std::optional<LocalTime> first_prep_end;
  for (const auto& e : tl.entries) {
    last = std::max(last, e.end);
    if (e.kind == TaskKind::Preparation && (!first_prep_end || e.end < *first_prep_end))
      first_prep_end = e.end;
  }
  m.makespan = last - tl.origin;
  if (first_prep_end) {
    m.first_result_raw = *first_prep_end - tl.origin;
    m.first_result_available = next_permitted_start(*first_prep_end, calendar);
  }
  return m;
}

double Savings::tenths_percent(double fraction) { return std::round(fraction * 1000.0) / 10.0; }

long Savings::whole_percent(double fraction) { return std::lround(fraction * 100.0); }

Savings compare(const Metrics& trad, const Metrics& autom) {
  Savings s;
  if (trad.first_result_raw && autom.first_result_raw && trad.first_result_raw->count() > 0)
    s.first_result = 1.0 - double(autom.first_result_raw->count()) / double(trad.first_result_raw->count());
  if (trad.makespan.count() > 0)
    s.makespan = 1.0 - double(autom.makespan.count()) / double(trad.makespan.count());
  return s;
}

std::string format_cell_time(LocalTime t) {
  static constexpr std::array<const char*, 12> kMonths = {
      "January", "February", "March",     "April",   "May",      "June",
      "July",    "August",   "September", "October", "November", "December"};
  const auto day = floor<days>(t);
  const year_month_day ymd{day};
  const long tod = long((t - day).count());
  const long h = tod / 60, m = tod % 60;
  const long h12 = h > 12 ? h - 12 : h;
  char buf[96];
  std::snprintf(buf, sizeof buf, "%s %u, %ld:%02ld %s", kMonths[unsigned(ymd.month()) - 1],
                unsigned(ymd.day()), h12, m, h >= 12 ? "PM" : "AM");
  return buf;
}

std::string render_table(const Timeline& tl) {
  std::ostringstream out;
  out << "| Device |";
  for (const auto& [name, label] : tl.columns) out << ' ' << label << " |";
  out << "\n|---|";
  for (std::size_t i = 0; i < tl.columns.size(); ++i) out << "---|";
  out << '\n';
  for (const auto& device : tl.device_order) {
    out << "| " << device << " |";
    for (const auto& [name, label] : tl.columns) {
      std::string cell;
      for (const auto& e : tl.entries) {
        if (e.device != device || e.resource != name) continue;
        if (!cell.empty()) cell += "; ";
        cell += format_cell_time(e.start) + " / " + format_cell_time(e.end);
      }
      out << ' ' << cell << " |";
    }
    out << '\n';
  }
  return out.str();
}

namespace {
std::string fixed1(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", v);
  return buf;
}
}  // namespace

std::string render_metrics(const Metrics& m, const WorkCalendar& calendar) {
  std::string out = "metrics:\n";
  out += "makespan_hours=" + fixed1(m.makespan_hours()) + "\n";
  out += "makespan_minutes=" + std::to_string(m.makespan.count()) + "\n";
  if (m.first_result_raw) {
    out += "first_result_raw_hours=" + fixed1(*m.first_result_raw_hours()) + "\n";
    out += "first_result_raw_minutes=" + std::to_string(m.first_result_raw->count()) + "\n";
  }
  if (m.first_result_available) {
    out += "first_result_available=" + format_cell_time(*m.first_result_available) + "\n";
    out += "first_result_available_day=" + std::to_string(calendar.day_number(*m.first_result_available)) + "\n";
  }
  return out;
}

std::string render_savings(const Savings& s) {
  std::string out = "savings:\n";
  if (s.first_result) {
    out += "first_result_saving_pct=" + fixed1(Savings::tenths_percent(*s.first_result)) + "\n";
    out += "first_result_saving_rounded=" + std::to_string(Savings::whole_percent(*s.first_result)) + "\n";
  }
  if (s.makespan) {
    out += "makespan_saving_pct=" + fixed1(Savings::tenths_percent(*s.makespan)) + "\n";
    out += "makespan_saving_rounded=" + std::to_string(Savings::whole_percent(*s.makespan)) + "\n";
  }
  return out;
}

Scenario synthesize_scenario(const std::vector<std::pair<std::string, Minutes>>& devices,
                             int stations, const std::vector<PrepRatio>& ratios,
                             const WorkCalendar& calendar) {
  if (stations <= 0) throw ScenarioError("need at least one imaging station");
  Scenario sc;
  sc.calendar = calendar;
  sc.start = LocalTime{calendar.anchor_date + calendar.day_start};
  for (int i = 0; i < stations; ++i)
    sc.resources.push_back({"es" + std::to_string(i + 1), "Evidence system " + std::to_string(i + 1),
                            ResourceKind::HumanGated, Discipline::ListedOrder, Minutes{0}});
  for (const auto& r : ratios)
    sc.resources.push_back({r.tool, r.tool, r.kind, r.discipline, Minutes{0}});
  for (std::size_t i = 0; i < devices.size(); ++i) {
    DeviceTask d;
    d.device_name = devices[i].first;
    d.station = sc.resources[i % std::size_t(stations)].name;
    d.imaging_duration = devices[i].second;
    for (const auto& r : ratios)
      d.prep_durations.emplace_back(
          r.tool, Minutes{std::max<long long>(1, std::llround(double(devices[i].second.count()) * r.ratio))});
    sc.devices.push_back(std::move(d));
  }
  validate_scenario(sc);
  return sc;
}

}  // namespace evidenceflow::sim
