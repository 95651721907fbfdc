// Copyright (c) 2026 gecolab authors
// SPDX-License-Identifier: Apache-2.0

#include "gecolab/config.hpp"

#include <cctype>
#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <functional>
#include <sstream>
#include <unordered_map>

#include "gecolab/digest.hpp"
#include "gecolab/errors.hpp"

namespace gecolab::config {

namespace {

using nlohmann::json;

enum class Kind { Int, Uint, Float, Bool, Str };

const char* kind_name(Kind k) {
    switch (k) {
        case Kind::Int: return "integer";
        case Kind::Uint: return "unsigned integer";
        case Kind::Float: return "float";
        case Kind::Bool: return "bool";
        case Kind::Str: return "string";
    }
    return "?";
}

struct Field {
    std::string key;
    Kind kind;
    std::function<json(const RunConfig&)> get;
    std::function<void(RunConfig&, const json&, const std::string&)> set;
};

void type_error(const std::string& key, Kind want, const std::string& where) {
    throw ConfigError("config key '" + key + "' expects " + kind_name(want) + " (" + where + ")");
}

template <class Ref>
Field make_int(const std::string& key, Ref ref) {
    return {key, Kind::Int, [ref](const RunConfig& c) { return json(ref(const_cast<RunConfig&>(c))); },
            [key, ref](RunConfig& c, const json& v, const std::string& where) {
                if (!v.is_number_integer() && !v.is_number_unsigned())
                    type_error(key, Kind::Int, where);
                ref(c) = v.get<int>();
            }};
}

template <class Ref>
Field make_uint(const std::string& key, Ref ref) {
    return {key, Kind::Uint, [ref](const RunConfig& c) { return json(ref(const_cast<RunConfig&>(c))); },
            [key, ref](RunConfig& c, const json& v, const std::string& where) {
                if (v.is_number_unsigned())
                    ref(c) = v.get<uint64_t>();
                else if (v.is_number_integer() && v.get<int64_t>() >= 0)
                    ref(c) = static_cast<uint64_t>(v.get<int64_t>());
                else
                    type_error(key, Kind::Uint, where);
            }};
}

template <class Ref>
Field make_float(const std::string& key, Ref ref) {
    return {key, Kind::Float, [ref](const RunConfig& c) { return json(ref(const_cast<RunConfig&>(c))); },
            [key, ref](RunConfig& c, const json& v, const std::string& where) {
                if (!v.is_number()) type_error(key, Kind::Float, where);
                ref(c) = v.get<double>();
            }};
}

template <class Ref>
Field make_bool(const std::string& key, Ref ref) {
    return {key, Kind::Bool, [ref](const RunConfig& c) { return json(ref(const_cast<RunConfig&>(c))); },
            [key, ref](RunConfig& c, const json& v, const std::string& where) {
                if (!v.is_boolean()) type_error(key, Kind::Bool, where);
                ref(c) = v.get<bool>();
            }};
}

template <class Ref>
Field make_str(const std::string& key, Ref ref) {
    return {key, Kind::Str, [ref](const RunConfig& c) { return json(ref(const_cast<RunConfig&>(c))); },
            [key, ref](RunConfig& c, const json& v, const std::string& where) {
                if (!v.is_string()) type_error(key, Kind::Str, where);
                ref(c) = v.get<std::string>();
            }};
}

// vsd.weight_fn round-trips through its enum, so invalid names fail at set
// time rather than at training time.
Field make_weight_fn() {
    return {"vsd.weight_fn", Kind::Str,
            [](const RunConfig& c) { return json(vsd::to_string(c.vsd.weight_fn)); },
            [](RunConfig& c, const json& v, const std::string& where) {
                if (!v.is_string()) type_error("vsd.weight_fn", Kind::Str, where);
                c.vsd.weight_fn = vsd::weight_fn_from_string(v.get<std::string>());
            }};
}

const std::vector<Field>& schema() {
    static const std::vector<Field> fields = [] {
        std::vector<Field> f;
        auto ref = [](auto member) { return member; };
        f.push_back(make_int("schema_version", ref([](RunConfig& c) -> int& { return c.schema_version; })));
        f.push_back(make_uint("seed", ref([](RunConfig& c) -> uint64_t& { return c.seed; })));
        f.push_back(make_bool("strict_determinism",
                              ref([](RunConfig& c) -> bool& { return c.strict_determinism; })));

        f.push_back(make_str("paths.dataset", ref([](RunConfig& c) -> std::string& { return c.paths.dataset; })));
        f.push_back(make_str("paths.checkpoints",
                             ref([](RunConfig& c) -> std::string& { return c.paths.checkpoints; })));
        f.push_back(make_str("paths.pgt", ref([](RunConfig& c) -> std::string& { return c.paths.pgt; })));
        f.push_back(make_str("paths.reports", ref([](RunConfig& c) -> std::string& { return c.paths.reports; })));

        f.push_back(make_int("dataset.scenes", ref([](RunConfig& c) -> int& { return c.dataset.scenes; })));
        f.push_back(make_int("dataset.resolution",
                             ref([](RunConfig& c) -> int& { return c.dataset.resolution; })));
        f.push_back(make_str("dataset.rig", ref([](RunConfig& c) -> std::string& { return c.dataset.rig; })));
        f.push_back(make_int("dataset.ring_count",
                             ref([](RunConfig& c) -> int& { return c.dataset.ring_count; })));
        f.push_back(make_float("dataset.radius", ref([](RunConfig& c) -> double& { return c.dataset.radius; })));
        f.push_back(make_float("dataset.fov_y", ref([](RunConfig& c) -> double& { return c.dataset.fov_y; })));

        f.push_back(make_int("model.width", ref([](RunConfig& c) -> int& { return c.model.width; })));
        f.push_back(make_int("model.views", ref([](RunConfig& c) -> int& { return c.model.views; })));
        f.push_back(make_int("model.resolution", ref([](RunConfig& c) -> int& { return c.model.resolution; })));
        f.push_back(make_int("model.cond_channels",
                             ref([](RunConfig& c) -> int& { return c.model.cond_channels; })));
        f.push_back(make_int("model.time_dim", ref([](RunConfig& c) -> int& { return c.model.time_dim; })));
        f.push_back(make_int("model.groups", ref([](RunConfig& c) -> int& { return c.model.groups; })));

        f.push_back(make_str("schedule.kind", ref([](RunConfig& c) -> std::string& { return c.schedule.kind; })));
        f.push_back(make_float("schedule.t_min", ref([](RunConfig& c) -> double& { return c.schedule.t_min; })));
        f.push_back(make_float("schedule.t_max", ref([](RunConfig& c) -> double& { return c.schedule.t_max; })));

        f.push_back(make_int("teacher.steps", ref([](RunConfig& c) -> int& { return c.teacher.steps; })));
        f.push_back(make_float("teacher.lr", ref([](RunConfig& c) -> double& { return c.teacher.lr; })));
        f.push_back(make_float("teacher.cond_dropout",
                               ref([](RunConfig& c) -> double& { return c.teacher.cond_dropout; })));
        f.push_back(make_uint("teacher.seed", ref([](RunConfig& c) -> uint64_t& { return c.teacher.seed; })));
        f.push_back(make_int("teacher.log_every",
                             ref([](RunConfig& c) -> int& { return c.teacher.log_every; })));

        f.push_back(make_int("recon.steps", ref([](RunConfig& c) -> int& { return c.recon.steps; })));
        f.push_back(make_float("recon.lr", ref([](RunConfig& c) -> double& { return c.recon.lr; })));
        f.push_back(make_float("recon.lambda_perceptual",
                               ref([](RunConfig& c) -> double& { return c.recon.lambda_perceptual; })));
        f.push_back(make_int("recon.novel_views_per_step",
                             ref([](RunConfig& c) -> int& { return c.recon.novel_views_per_step; })));
        f.push_back(make_uint("recon.seed", ref([](RunConfig& c) -> uint64_t& { return c.recon.seed; })));
        f.push_back(make_int("recon.log_every", ref([](RunConfig& c) -> int& { return c.recon.log_every; })));

        f.push_back(make_float("vsd.guidance_teacher",
                               ref([](RunConfig& c) -> double& { return c.vsd.guidance_teacher; })));
        f.push_back(make_float("vsd.guidance_student",
                               ref([](RunConfig& c) -> double& { return c.vsd.guidance_student; })));
        f.push_back(make_float("vsd.t_student_min",
                               ref([](RunConfig& c) -> double& { return c.vsd.t_student_min; })));
        f.push_back(make_float("vsd.t_student_max",
                               ref([](RunConfig& c) -> double& { return c.vsd.t_student_max; })));
        f.push_back(make_float("vsd.t_vsd_min", ref([](RunConfig& c) -> double& { return c.vsd.t_vsd_min; })));
        f.push_back(make_float("vsd.t_vsd_max", ref([](RunConfig& c) -> double& { return c.vsd.t_vsd_max; })));
        f.push_back(make_weight_fn());
        f.push_back(make_float("vsd.lr_gen", ref([](RunConfig& c) -> double& { return c.vsd.lr_gen; })));
        f.push_back(make_float("vsd.lr_stu", ref([](RunConfig& c) -> double& { return c.vsd.lr_stu; })));
        f.push_back(make_float("vsd.beta1", ref([](RunConfig& c) -> double& { return c.vsd.beta1; })));
        f.push_back(make_float("vsd.beta2", ref([](RunConfig& c) -> double& { return c.vsd.beta2; })));
        f.push_back(make_int("vsd.steps", ref([](RunConfig& c) -> int& { return c.vsd.steps; })));
        f.push_back(make_uint("vsd.seed", ref([](RunConfig& c) -> uint64_t& { return c.vsd.seed; })));
        f.push_back(make_int("vsd.log_every", ref([](RunConfig& c) -> int& { return c.vsd.log_every; })));
        f.push_back(make_int("vsd.sample_every",
                             ref([](RunConfig& c) -> int& { return c.vsd.sample_every; })));
        f.push_back(make_int("vsd.checkpoint_every",
                             ref([](RunConfig& c) -> int& { return c.vsd.checkpoint_every; })));

        f.push_back(make_int("stage2.ddim_steps",
                             ref([](RunConfig& c) -> int& { return c.stage2.ddim_steps; })));
        f.push_back(make_int("stage2.n_views", ref([](RunConfig& c) -> int& { return c.stage2.n_views; })));
        f.push_back(make_float("stage2.lambda_perceptual",
                               ref([](RunConfig& c) -> double& { return c.stage2.lambda_perceptual; })));
        f.push_back(make_float("stage2.lr", ref([](RunConfig& c) -> double& { return c.stage2.lr; })));
        f.push_back(make_int("stage2.batch_size",
                             ref([](RunConfig& c) -> int& { return c.stage2.batch_size; })));
        f.push_back(make_int("stage2.epochs", ref([](RunConfig& c) -> int& { return c.stage2.epochs; })));
        f.push_back(make_int("stage2.z_per_condition",
                             ref([](RunConfig& c) -> int& { return c.stage2.z_per_condition; })));
        f.push_back(make_int("stage2.view_subset",
                             ref([](RunConfig& c) -> int& { return c.stage2.view_subset; })));
        f.push_back(make_float("stage2.guidance",
                               ref([](RunConfig& c) -> double& { return c.stage2.guidance; })));
        f.push_back(make_uint("stage2.seed", ref([](RunConfig& c) -> uint64_t& { return c.stage2.seed; })));

        f.push_back(make_float("render.cut_sigma",
                               ref([](RunConfig& c) -> double& { return c.render.cut_sigma; })));
        f.push_back(make_float("render.near_plane",
                               ref([](RunConfig& c) -> double& { return c.render.near_plane; })));
        f.push_back(make_float("render.cov_reg", ref([](RunConfig& c) -> double& { return c.render.cov_reg; })));

        f.push_back(make_str("eval.protocol", ref([](RunConfig& c) -> std::string& { return c.eval.protocol; })));
        f.push_back(make_int("eval.scenes", ref([](RunConfig& c) -> int& { return c.eval.scenes; })));
        f.push_back(make_int("eval.diversity_seeds",
                             ref([](RunConfig& c) -> int& { return c.eval.diversity_seeds; })));
        return f;
    }();
    return fields;
}

const std::unordered_map<std::string, size_t>& schema_index() {
    static const std::unordered_map<std::string, size_t> index = [] {
        std::unordered_map<std::string, size_t> m;
        for (size_t i = 0; i < schema().size(); ++i) m[schema()[i].key] = i;
        return m;
    }();
    return index;
}

const Field& field_or_throw(const std::string& key, const std::string& where) {
    auto it = schema_index().find(key);
    if (it == schema_index().end())
        throw ConfigError("unknown config key '" + key + "' (" + where + ")");
    return schema()[it->second];
}

// ---- config text parsing ---------------------------------------------------
// Grammar (documented in docs/config_format.md): UTF-8 lines of
//   [section]  |  key = value  |  # comment  |  blank
// values: "string" (\" and \\ escapes), true/false, integer, float.

bool bare_key_ok(const std::string& s) {
    if (s.empty()) return false;
    for (char ch : s)
        if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '-' || ch == '.'))
            return false;
    return true;
}

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::string strip_comment(const std::string& line) {
    bool in_str = false;
    for (size_t i = 0; i < line.size(); ++i) {
        char ch = line[i];
        if (in_str && ch == '\\' && i + 1 < line.size()) {
            ++i;
            continue;
        }
        if (ch == '"') in_str = !in_str;
        if (ch == '#' && !in_str) return line.substr(0, i);
    }
    return line;
}

json parse_scalar(const std::string& raw, int line_no) {
    const std::string where = "line " + std::to_string(line_no);
    if (!raw.empty() && raw.front() == '"') {
        std::string out;
        size_t i = 1;
        bool closed = false;
        while (i < raw.size()) {
            char ch = raw[i];
            if (ch == '\\') {
                if (i + 1 >= raw.size() || (raw[i + 1] != '"' && raw[i + 1] != '\\'))
                    throw ConfigError("bad string escape (" + where + ")");
                out.push_back(raw[i + 1]);
                i += 2;
                continue;
            }
            if (ch == '"') {
                closed = true;
                ++i;
                break;
            }
            out.push_back(ch);
            ++i;
        }
        if (!closed || i != raw.size())
            throw ConfigError("unterminated or malformed string (" + where + ")");
        return json(out);
    }
    if (raw == "true") return json(true);
    if (raw == "false") return json(false);
    if (raw.empty()) throw ConfigError("missing value (" + where + ")");
    const bool has_float_marker = raw.find_first_of(".eE") != std::string::npos;
    char* end = nullptr;
    if (!has_float_marker) {
        if (raw[0] == '-') {
            errno = 0;
            long long v = std::strtoll(raw.c_str(), &end, 10);
            if (errno == 0 && end == raw.c_str() + raw.size()) return json(v);
        } else {
            errno = 0;
            unsigned long long v = std::strtoull(raw.c_str(), &end, 10);
            if (errno == 0 && end == raw.c_str() + raw.size()) {
                if (v <= static_cast<unsigned long long>(std::numeric_limits<int64_t>::max()))
                    return json(static_cast<int64_t>(v));
                return json(static_cast<uint64_t>(v));
            }
        }
    }
    errno = 0;
    double d = std::strtod(raw.c_str(), &end);
    if (errno == 0 && end == raw.c_str() + raw.size() && end != raw.c_str()) return json(d);
    throw ConfigError("cannot parse value '" + raw + "' (" + where + ")");
}

struct ParsedLine {
    std::string key;
    json value;
    int line_no;
};

std::vector<ParsedLine> parse_config_text(const std::string& text) {
    std::vector<ParsedLine> out;
    std::string section;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string where = "line " + std::to_string(line_no);
        std::string body = trim(strip_comment(line));
        if (body.empty()) continue;
        if (body.front() == '[') {
            if (body.back() != ']') throw ConfigError("unterminated section header (" + where + ")");
            section = trim(body.substr(1, body.size() - 2));
            if (!bare_key_ok(section))
                throw ConfigError("bad section name '" + section + "' (" + where + ")");
            continue;
        }
        size_t eq = body.find('=');
        if (eq == std::string::npos)
            throw ConfigError("expected 'key = value' (" + where + ")");
        std::string key = trim(body.substr(0, eq));
        if (!bare_key_ok(key) || key.find('.') != std::string::npos)
            throw ConfigError("bad key '" + key + "' (" + where + ")");
        std::string full = section.empty() ? key : section + "." + key;
        out.push_back({full, parse_scalar(trim(body.substr(eq + 1)), line_no), line_no});
    }
    return out;
}

json parse_override_value(const Field& f, const std::string& raw, const std::string& where) {
    switch (f.kind) {
        case Kind::Str: {
            if (raw.size() >= 2 && raw.front() == '"' && raw.back() == '"')
                return parse_scalar(raw, 0);
            return json(raw);
        }
        case Kind::Bool: {
            if (raw == "true") return json(true);
            if (raw == "false") return json(false);
            throw ConfigError("config key '" + f.key + "' expects true/false (" + where + ")");
        }
        default: {
            json v = parse_scalar(raw, 0);
            if (!v.is_number())
                throw ConfigError("config key '" + f.key + "' expects a number (" + where + ")");
            return v;
        }
    }
}

RunConfig defaults_from_env() {
    RunConfig c;
    const char* home = std::getenv("GECO_LAB_HOME");
    const std::string root = (home && *home) ? home : "./geco_home";
    c.paths.dataset = root + "/datasets/main";
    c.paths.checkpoints = root + "/checkpoints";
    c.paths.pgt = root + "/pgt";
    c.paths.reports = root + "/reports";
    return c;
}

void check_positive(bool ok, const std::string& what) {
    if (!ok) throw ConfigError("config: " + what);
}

} // namespace

const char* to_string(Source s) {
    switch (s) {
        case Source::Default: return "default";
        case Source::File: return "file";
        case Source::Override: return "override";
    }
    return "?";
}

const std::vector<std::string>& schema_keys() {
    static const std::vector<std::string> keys = [] {
        std::vector<std::string> k;
        for (const Field& f : schema()) k.push_back(f.key);
        return k;
    }();
    return keys;
}

void RunConfig::validate() const {
    check_positive(schema_version == 1, "unsupported schema_version");
    teacher_net().validate();
    recon_net().validate();
    diffusion::schedule_kind_from_string(schedule.kind);
    check_positive(schedule.t_min > 0 && schedule.t_max < 1 && schedule.t_min < schedule.t_max,
                   "schedule t range must satisfy 0 < t_min < t_max < 1");
    check_positive(teacher.steps >= 1 && teacher.lr > 0, "teacher steps/lr must be positive");
    check_positive(teacher.cond_dropout >= 0 && teacher.cond_dropout < 1,
                   "teacher.cond_dropout must lie in [0,1)");
    check_positive(teacher.log_every >= 1, "teacher.log_every must be >= 1");
    check_positive(recon.steps >= 1 && recon.lr > 0, "recon steps/lr must be positive");
    check_positive(recon.lambda_perceptual >= 0, "recon.lambda_perceptual must be >= 0");
    check_positive(recon.novel_views_per_step >= 0, "recon.novel_views_per_step must be >= 0");
    check_positive(recon.log_every >= 1, "recon.log_every must be >= 1");
    vsd.validate();
    stage2.validate();
    check_positive(render.cut_sigma > 0 && render.near_plane > 0 && render.cov_reg >= 0,
                   "render parameters out of range");
    check_positive(dataset.scenes >= 1, "dataset.scenes must be >= 1");
    check_positive(dataset.radius > 0, "dataset.radius must be > 0");
    check_positive(dataset.fov_y > 0 && dataset.fov_y < 3.141592653589793,
                   "dataset.fov_y must lie in (0, pi)");
    check_positive(dataset.resolution == model.resolution,
                   "dataset.resolution must equal model.resolution");
    if (dataset.rig != "sixview" && dataset.rig != "ring")
        throw ConfigError("config: dataset.rig must be 'sixview' or 'ring'");
    check_positive(dataset.ring_count >= 1, "dataset.ring_count must be >= 1");
    const int rig_views = dataset.rig == "sixview" ? 6 : dataset.ring_count;
    check_positive(model.views == rig_views, "model.views must match the dataset rig size");
    if (eval.protocol != "sixview" && eval.protocol != "ring15")
        throw ConfigError("config: eval.protocol must be 'sixview' or 'ring15'");
    check_positive(eval.scenes >= 1, "eval.scenes must be >= 1");
    check_positive(eval.diversity_seeds >= 2, "eval.diversity_seeds must be >= 2");
}

nlohmann::json RunConfig::to_json() const {
    json out = json::object();
    for (const Field& f : schema()) {
        size_t dot = f.key.find('.');
        if (dot == std::string::npos)
            out[f.key] = f.get(*this);
        else
            out[f.key.substr(0, dot)][f.key.substr(dot + 1)] = f.get(*this);
    }
    return out;
}

std::string RunConfig::digest() const { return sha256_hex(to_json().dump()); }

models::NetConfig RunConfig::teacher_net() const {
    models::NetConfig n;
    n.width = model.width;
    n.views = model.views;
    n.resolution = model.resolution;
    n.in_channels = 3;
    n.out_channels = 3;
    n.cond_channels = model.cond_channels;
    n.time_dim = model.time_dim;
    n.groups = model.groups;
    return n;
}

models::NetConfig RunConfig::recon_net() const {
    models::NetConfig n = teacher_net();
    n.in_channels = 9;
    n.out_channels = 12;
    return n;
}

diffusion::DiffusionSchedule RunConfig::make_schedule() const {
    return diffusion::make_schedule(diffusion::schedule_kind_from_string(schedule.kind),
                                    schedule.t_min, schedule.t_max);
}

scene::CameraRig RunConfig::make_generation_rig() const {
    scene::RigParams p;
    p.count = dataset.ring_count;
    p.radius = dataset.radius;
    p.fov_y = dataset.fov_y;
    p.height = dataset.resolution;
    p.width = dataset.resolution;
    return scene::make_rig(dataset.rig, p);
}

nlohmann::json ResolvedConfig::echo() const {
    json out = json::object();
    for (const Field& f : schema()) {
        auto it = provenance.find(f.key);
        out[f.key] = {{"value", f.get(config)},
                      {"source", to_string(it == provenance.end() ? Source::Default : it->second)}};
    }
    return out;
}

ResolvedConfig resolve_config_text(const std::string& text,
                                   const std::vector<std::string>& overrides) {
    ResolvedConfig rc;
    rc.config = defaults_from_env();
    for (const std::string& key : schema_keys()) rc.provenance[key] = Source::Default;

    for (const ParsedLine& pl : parse_config_text(text)) {
        const std::string where = "line " + std::to_string(pl.line_no);
        const Field& f = field_or_throw(pl.key, where);
        if (rc.provenance.at(pl.key) == Source::File)
            throw ConfigError("duplicate config key '" + pl.key + "' (" + where + ")");
        f.set(rc.config, pl.value, where);
        rc.provenance[pl.key] = Source::File;
    }
    for (const std::string& ov : overrides) {
        size_t eq = ov.find('=');
        if (eq == std::string::npos || eq == 0)
            throw ConfigError("override must be key=value, got '" + ov + "'");
        const std::string key = trim(ov.substr(0, eq));
        const std::string where = "--set " + key;
        const Field& f = field_or_throw(key, where);
        f.set(rc.config, parse_override_value(f, trim(ov.substr(eq + 1)), where), where);
        rc.provenance[key] = Source::Override;
    }
    return rc;
}

ResolvedConfig resolve_config(const std::optional<std::filesystem::path>& file,
                              const std::vector<std::string>& overrides) {
    std::string text;
    if (file) {
        std::ifstream in(*file);
        if (!in) throw ConfigError("cannot read config file " + file->string());
        std::ostringstream buf;
        buf << in.rdbuf();
        text = buf.str();
    }
    return resolve_config_text(text, overrides);
}

std::string emit_config(const RunConfig& c) {
    std::ostringstream out;
    std::string section;
    bool first = true;
    for (const Field& f : schema()) {
        size_t dot = f.key.find('.');
        std::string sec = dot == std::string::npos ? "" : f.key.substr(0, dot);
        std::string key = dot == std::string::npos ? f.key : f.key.substr(dot + 1);
        if (sec != section) {
            if (!first) out << "\n";
            out << "[" << sec << "]\n";
            section = sec;
        }
        first = false;
        json v = f.get(c);
        if (v.is_string()) {
            std::string s = v.get<std::string>();
            out << key << " = \"";
            for (char ch : s) {
                if (ch == '"' || ch == '\\') out << '\\';
                out << ch;
            }
            out << "\"\n";
        } else if (f.kind == Kind::Float) {
            // Force a float marker so the value parses back as a float.
            std::string s = v.dump();
            if (s.find_first_of(".eE") == std::string::npos) s += ".0";
            out << key << " = " << s << "\n";
        } else {
            out << key << " = " << v.dump() << "\n";
        }
    }
    return out.str();
}

} // namespace gecolab::config
