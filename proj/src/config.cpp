#include "evoderm/config.hpp"

#include "evoderm/error.hpp"
#include "evoderm/util.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <map>
#include <sstream>
#include <variant>

namespace evoderm {

namespace fs = std::filesystem;

AppConfig::AppConfig() {
    for (auto role : kRoles) roles.emplace(std::string(role), RoleConfig{});
}

void AppConfig::validate() const {
    evolution.validate();
    weights.validate();
    chunk_policy.validate();
    if (snapshot_every == 0) throw Error(ErrorCode::ConfigError, "memory.snapshot_every must be positive");
    if (history_k == 0 || prior_k == 0) throw Error(ErrorCode::ConfigError, "history_k and prior_k must be positive");
    if (port < 0 || port > 65535) throw Error(ErrorCode::ConfigError, "service.port out of range");
    if (max_in_flight == 0) throw Error(ErrorCode::ConfigError, "service.max_in_flight must be positive");
    if (!(planted_boost >= 0.0)) throw Error(ErrorCode::ConfigError, "mock.planted_boost must be >= 0");
    std::vector<std::string> sorted = labels;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
        throw Error(ErrorCode::ConfigError, "pipeline.labels has duplicates");
    }
    for (const auto& [name, role] : roles) {
        if (role.mode == BackendMode::Http) {
            try {
                role.profile.validate();
            } catch (const Error& e) {
                throw Error(ErrorCode::ConfigError, "backend." + name + ": " + e.what());
            }
            if (role.profile.model_name.empty()) {
                throw Error(ErrorCode::ConfigError, "backend." + name + ".model_name is required in http mode");
            }
        }
    }
}

EnvLookup process_env() {
    return [](const std::string& name) -> std::optional<std::string> {
        const char* v = std::getenv(name.c_str());
        if (v == nullptr) return std::nullopt;
        return std::string(v);
    };
}

namespace {

using List = std::vector<std::string>;
using Value = std::variant<std::string, std::int64_t, double, bool, List>;

[[noreturn]] void fail(const std::string& message) { throw Error(ErrorCode::ConfigError, message); }

// --- TOML subset ------------------------------------------------------------

class Parser {
public:
    explicit Parser(std::string_view text) : text_(text) {}

    std::map<std::string, Value> parse() {
        std::map<std::string, Value> out;
        std::string section;
        while (!at_end()) {
            skip_blank();
            if (at_end()) break;
            char c = peek();
            if (c == '#') {
                skip_line();
            } else if (c == '[') {
                ++pos_;
                auto close = text_.find(']', pos_);
                if (close == std::string_view::npos) error("unterminated section header");
                section = trim(text_.substr(pos_, close - pos_));
                if (section.empty() || !valid_key(section, true)) error("bad section name '" + section + "'");
                pos_ = close + 1;
                end_of_line();
            } else {
                std::string key = read_key();
                skip_inline_space();
                if (at_end() || peek() != '=') error("expected '=' after key '" + key + "'");
                ++pos_;
                skip_inline_space();
                Value v = read_value();
                end_of_line();
                std::string full = section.empty() ? key : section + "." + key;
                if (!out.emplace(full, std::move(v)).second) error("duplicate key '" + full + "'");
            }
        }
        return out;
    }

    /// Parses a lone scalar or array (used for env values); nullopt if it is not one.
    static std::optional<Value> scalar(std::string_view text) {
        Parser p(text);
        try {
            p.skip_inline_space();
            Value v = p.read_value();
            p.skip_inline_space();
            if (!p.at_end()) return std::nullopt;
            return v;
        } catch (const Error&) {
            return std::nullopt;
        }
    }

private:
    std::string_view text_;
    std::size_t pos_ = 0;

    bool at_end() const { return pos_ >= text_.size(); }
    char peek() const { return text_[pos_]; }

    std::size_t line() const { return static_cast<std::size_t>(std::count(text_.begin(), text_.begin() + pos_, '\n')) + 1; }
    [[noreturn]] void error(const std::string& what) const { fail("config line " + std::to_string(line()) + ": " + what); }

    static bool valid_key(std::string_view k, bool dotted) {
        return !k.empty() && std::all_of(k.begin(), k.end(), [&](unsigned char c) {
                   return std::isalnum(c) || c == '_' || c == '-' || (dotted && c == '.');
               });
    }

    void skip_inline_space() {
        while (!at_end() && (peek() == ' ' || peek() == '\t')) ++pos_;
    }
    void skip_blank() {
        while (!at_end() && std::isspace(static_cast<unsigned char>(peek()))) ++pos_;
    }
    void skip_line() {
        while (!at_end() && peek() != '\n') ++pos_;
    }
    void end_of_line() {
        skip_inline_space();
        if (!at_end() && peek() == '#') skip_line();
        if (!at_end() && peek() == '\r') ++pos_;
        if (!at_end() && peek() != '\n') error("unexpected trailing characters");
    }

    std::string read_key() {
        std::size_t start = pos_;
        while (!at_end() && !std::isspace(static_cast<unsigned char>(peek())) && peek() != '=') ++pos_;
        std::string key(text_.substr(start, pos_ - start));
        if (!valid_key(key, false)) error("bad key '" + key + "'");
        return key;
    }

    std::string read_string() {
        ++pos_;  // opening quote
        std::string out;
        while (true) {
            if (at_end() || peek() == '\n') error("unterminated string");
            char c = text_[pos_++];
            if (c == '"') return out;
            if (c != '\\') {
                out += c;
                continue;
            }
            if (at_end()) error("dangling escape");
            char e = text_[pos_++];
            switch (e) {
                case 'n': out += '\n'; break;
                case 't': out += '\t'; break;
                case '"': out += '"'; break;
                case '\\': out += '\\'; break;
                default: error(std::string("unsupported escape \\") + e);
            }
        }
    }

    Value read_value() {
        if (at_end()) error("missing value");
        char c = peek();
        if (c == '"') return read_string();
        if (c == '[') {
            ++pos_;
            List items;
            while (true) {
                skip_blank();
                if (!at_end() && peek() == '#') {
                    skip_line();
                    continue;
                }
                if (at_end()) error("unterminated array");
                if (peek() == ']') {
                    ++pos_;
                    return items;
                }
                if (peek() != '"') error("arrays hold strings only");
                items.push_back(read_string());
                skip_blank();
                if (!at_end() && peek() == ',') ++pos_;
            }
        }
        std::size_t start = pos_;
        while (!at_end() && peek() != '\n' && peek() != '#' && peek() != '\r') ++pos_;
        std::string token = trim(text_.substr(start, pos_ - start));
        if (token == "true") return true;
        if (token == "false") return false;
        std::int64_t i = 0;
        auto [iend, iec] = std::from_chars(token.data(), token.data() + token.size(), i);
        if (iec == std::errc{} && iend == token.data() + token.size()) return i;
        double d = 0.0;
        auto [dend, dec] = std::from_chars(token.data(), token.data() + token.size(), d);
        if (dec == std::errc{} && dend == token.data() + token.size()) return d;
        error("cannot parse value '" + token + "'");
    }
};

// --- typed access -----------------------------------------------------------

struct Field {
    const std::string& key;
    const Value& value;

    std::string str() const {
        if (auto s = std::get_if<std::string>(&value)) return *s;
        fail(key + " must be a string");
    }
    std::int64_t integer() const {
        if (auto i = std::get_if<std::int64_t>(&value)) return *i;
        fail(key + " must be an integer");
    }
    std::uint64_t unsigned_integer() const {
        auto i = integer();
        if (i < 0) fail(key + " must be >= 0");
        return static_cast<std::uint64_t>(i);
    }
    double real() const {
        if (auto d = std::get_if<double>(&value)) return *d;
        if (auto i = std::get_if<std::int64_t>(&value)) return static_cast<double>(*i);
        fail(key + " must be a number");
    }
    bool boolean() const {
        if (auto b = std::get_if<bool>(&value)) return *b;
        fail(key + " must be true or false");
    }
    List list() const {
        if (auto l = std::get_if<List>(&value)) return *l;
        if (auto s = std::get_if<std::string>(&value)) {  // env form: comma separated
            List out;
            std::stringstream ss(*s);
            std::string item;
            while (std::getline(ss, item, ',')) {
                item = trim(item);
                if (!item.empty()) out.push_back(item);
            }
            return out;
        }
        fail(key + " must be an array of strings");
    }
};

struct KeyDef {
    std::string key;
    std::string default_repr;
    std::function<void(AppConfig&, const Field&, const fs::path&)> apply;
};

std::string resolve(const fs::path& base, const std::string& p) {
    if (p.empty() || base.empty() || fs::path(p).is_absolute()) return p;
    return (base / p).lexically_normal().string();
}

std::string quote_str(std::string_view s) { return "\"" + std::string(s) + "\""; }

std::vector<KeyDef> key_table() {
    AppConfig d;
    std::vector<KeyDef> keys = {
        {"memory.dir", quote_str(d.memory_dir),
         [](AppConfig& c, const Field& f, const fs::path& b) { c.memory_dir = resolve(b, f.str()); }},
        {"memory.snapshot_every", std::to_string(d.snapshot_every),
         [](AppConfig& c, const Field& f, const fs::path&) { c.snapshot_every = f.unsigned_integer(); }},
        {"kb.path", quote_str(d.kb_path),
         [](AppConfig& c, const Field& f, const fs::path& b) { c.kb_path = resolve(b, f.str()); }},
        {"kb.handbook_dir", quote_str(d.handbook_dir),
         [](AppConfig& c, const Field& f, const fs::path& b) { c.handbook_dir = resolve(b, f.str()); }},
        {"kb.max_chars", std::to_string(d.chunk_policy.max_chars),
         [](AppConfig& c, const Field& f, const fs::path&) { c.chunk_policy.max_chars = f.unsigned_integer(); }},
        {"kb.overlap_chars", std::to_string(d.chunk_policy.overlap_chars),
         [](AppConfig& c, const Field& f, const fs::path&) { c.chunk_policy.overlap_chars = f.unsigned_integer(); }},
        {"kb.prefer_paragraphs", "true",
         [](AppConfig& c, const Field& f, const fs::path&) { c.chunk_policy.prefer_paragraphs = f.boolean(); }},
        {"evolution.n_thresh", std::to_string(d.evolution.n_thresh),
         [](AppConfig& c, const Field& f, const fs::path&) {
             c.evolution.n_thresh = static_cast<std::uint32_t>(f.unsigned_integer());
         }},
        {"evolution.top_k", std::to_string(d.evolution.top_k),
         [](AppConfig& c, const Field& f, const fs::path&) {
             c.evolution.top_k = static_cast<std::uint32_t>(f.unsigned_integer());
         }},
        {"evolution.dim", std::to_string(d.evolution.dim),
         [](AppConfig& c, const Field& f, const fs::path&) { c.evolution.dim = f.unsigned_integer(); }},
        {"evolution.allow_new_labels", "false",
         [](AppConfig& c, const Field& f, const fs::path&) { c.evolution.allow_new_labels = f.boolean(); }},
        {"review.w_conf", format_double(d.weights.w_conf),
         [](AppConfig& c, const Field& f, const fs::path&) { c.weights.w_conf = f.real(); }},
        {"review.w_guideline", format_double(d.weights.w_guideline),
         [](AppConfig& c, const Field& f, const fs::path&) { c.weights.w_guideline = f.real(); }},
        {"review.w_history", format_double(d.weights.w_history),
         [](AppConfig& c, const Field& f, const fs::path&) { c.weights.w_history = f.real(); }},
        {"pipeline.labels", "[]",
         [](AppConfig& c, const Field& f, const fs::path&) {
             c.labels.clear();
             for (auto& l : f.list()) c.labels.push_back(normalize_label(l));
         }},
        {"pipeline.history_k", std::to_string(d.history_k),
         [](AppConfig& c, const Field& f, const fs::path&) { c.history_k = f.unsigned_integer(); }},
        {"pipeline.prior_k", std::to_string(d.prior_k),
         [](AppConfig& c, const Field& f, const fs::path&) { c.prior_k = f.unsigned_integer(); }},
        {"pipeline.use_memory", "true",
         [](AppConfig& c, const Field& f, const fs::path&) { c.use_memory = f.boolean(); }},
        {"mock.seed", std::to_string(d.mock_seed),
         [](AppConfig& c, const Field& f, const fs::path&) { c.mock_seed = f.unsigned_integer(); }},
        {"mock.planted_boost", format_double(d.planted_boost),
         [](AppConfig& c, const Field& f, const fs::path&) { c.planted_boost = f.real(); }},
        {"service.bind", quote_str(d.bind_address),
         [](AppConfig& c, const Field& f, const fs::path&) { c.bind_address = f.str(); }},
        {"service.port", std::to_string(d.port),
         [](AppConfig& c, const Field& f, const fs::path&) { c.port = static_cast<int>(f.integer()); }},
        {"service.max_in_flight", std::to_string(d.max_in_flight),
         [](AppConfig& c, const Field& f, const fs::path&) { c.max_in_flight = f.unsigned_integer(); }},
    };

    BackendProfile p;
    for (auto role_view : kRoles) {
        std::string role(role_view);
        std::string prefix = "backend." + role + ".";
        auto profile = [role](AppConfig& c) -> BackendProfile& { return c.roles.at(role).profile; };
        keys.push_back({prefix + "mode", quote_str("mock"), [role](AppConfig& c, const Field& f, const fs::path&) {
                            std::string m = f.str();
                            if (m == "mock") {
                                c.roles.at(role).mode = BackendMode::Mock;
                            } else if (m == "http") {
                                c.roles.at(role).mode = BackendMode::Http;
                            } else {
                                fail(f.key + " must be \"mock\" or \"http\"");
                            }
                        }});
        keys.push_back({prefix + "endpoint_url", quote_str(p.endpoint_url),
                        [profile](AppConfig& c, const Field& f, const fs::path&) { profile(c).endpoint_url = f.str(); }});
        keys.push_back({prefix + "model_name", quote_str(p.model_name),
                        [profile](AppConfig& c, const Field& f, const fs::path&) { profile(c).model_name = f.str(); }});
        keys.push_back({prefix + "temperature", format_double(p.temperature),
                        [profile](AppConfig& c, const Field& f, const fs::path&) { profile(c).temperature = f.real(); }});
        keys.push_back({prefix + "max_tokens", std::to_string(p.max_tokens),
                        [profile](AppConfig& c, const Field& f, const fs::path&) {
                            profile(c).max_tokens = static_cast<int>(f.integer());
                        }});
        keys.push_back({prefix + "timeout_ms", std::to_string(p.timeout_ms),
                        [profile](AppConfig& c, const Field& f, const fs::path&) {
                            profile(c).timeout_ms = static_cast<int>(f.integer());
                        }});
        keys.push_back({prefix + "max_retries", std::to_string(p.max_retries),
                        [profile](AppConfig& c, const Field& f, const fs::path&) {
                            profile(c).max_retries = static_cast<int>(f.integer());
                        }});
        keys.push_back({prefix + "backoff_base_ms", std::to_string(p.backoff_base_ms),
                        [profile](AppConfig& c, const Field& f, const fs::path&) {
                            profile(c).backoff_base_ms = static_cast<int>(f.integer());
                        }});
        keys.push_back({prefix + "auth_token_env_var", quote_str(p.auth_token_env_var),
                        [profile](AppConfig& c, const Field& f, const fs::path&) {
                            profile(c).auth_token_env_var = f.str();
                        }});
    }
    return keys;
}

std::string env_name(const std::string& key) {
    std::string out = "EVODERM_";
    for (char c : key) out += c == '.' || c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return out;
}

}  // namespace

std::vector<std::string> config_keys() {
    std::vector<std::string> out;
    for (const auto& k : key_table()) out.push_back(k.key);
    return out;
}

AppConfig parse_config(std::string_view text, const fs::path& base_dir, const EnvLookup& env) {
    auto values = Parser(text).parse();
    auto table = key_table();

    for (const auto& [key, _] : values) {
        bool known = std::any_of(table.begin(), table.end(), [&](const KeyDef& k) { return k.key == key; });
        if (!known) fail("unknown config key '" + key + "'");
    }

    AppConfig config;
    for (const auto& def : table) {
        std::optional<Value> value;
        fs::path base = base_dir;
        if (auto it = values.find(def.key); it != values.end()) value = it->second;
        if (env) {
            if (auto raw = env(env_name(def.key))) {
                value = Parser::scalar(*raw).value_or(Value{*raw});
                base = fs::current_path();
            }
        }
        if (value) def.apply(config, Field{def.key, *value}, base);
    }
    // Per-role jitter streams derive from the mock seed.
    for (auto& [name, role] : config.roles) role.profile.jitter_seed = derive_seed(config.mock_seed, stable_hash(name));
    config.validate();
    return config;
}

AppConfig load_config(const std::string& path, const EnvLookup& env) {
    if (path.empty()) return parse_config("", fs::current_path(), env);
    std::string text;
    try {
        text = read_file_text(path);
    } catch (const Error& e) {
        throw Error(ErrorCode::ConfigError, std::string("cannot read config: ") + e.what());
    }
    return parse_config(text, fs::absolute(path).parent_path(), env);
}

std::string example_config() {
    std::ostringstream out;
    out << "# evoderm configuration. Every key may be overridden from the environment as\n"
           "# EVODERM_<SECTION>_<KEY>, e.g. EVODERM_EVOLUTION_N_THRESH=5 or\n"
           "# EVODERM_BACKEND_REVIEWER_MODE=http. Relative paths resolve against this file.\n";
    std::string section;
    for (const auto& def : key_table()) {
        auto dot = def.key.rfind('.');
        std::string sec = def.key.substr(0, dot);
        if (sec != section) {
            out << "\n[" << sec << "]\n";
            section = sec;
        }
        out << "# " << def.key.substr(dot + 1) << " = " << def.default_repr << "\n";
    }
    return out.str();
}

}  // namespace evoderm
