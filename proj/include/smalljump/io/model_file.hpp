#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "json.hpp"

#include "../errors.hpp"
#include "../measure.hpp"
#include "csv.hpp"

namespace smalljump::io {

using nlohmann::json;

struct ModelSpec {
    LevyModel model;
    SectorSettings sector;
    json source;
};

namespace detail {

inline std::string where(const std::string& path, const std::string& msg) { return path + ": " + msg; }

inline const json& field(const json& obj, const std::string& key, const std::string& path) {
    if (!obj.is_object()) throw ConfigError(where(path, "expected an object"));
    auto it = obj.find(key);
    if (it == obj.end()) throw ConfigError(where(path + "." + key, "missing required field"));
    return *it;
}

inline double number(const json& obj, const std::string& key, const std::string& path, double fallback) {
    if (!obj.is_object()) return fallback;
    auto it = obj.find(key);
    if (it == obj.end()) return fallback;
    if (!it->is_number()) throw ConfigError(where(path + "." + key, "expected a number"));
    const double v = it->get<double>();
    if (!std::isfinite(v)) throw ConfigError(where(path + "." + key, "not finite"));
    return v;
}

inline double number(const json& obj, const std::string& key, const std::string& path) {
    const auto& v = field(obj, key, path);
    if (!v.is_number()) throw ConfigError(where(path + "." + key, "expected a number"));
    return v.get<double>();
}

inline std::string text(const json& obj, const std::string& key, const std::string& path,
                        const std::string& fallback) {
    if (!obj.is_object()) return fallback;
    auto it = obj.find(key);
    if (it == obj.end()) return fallback;
    if (!it->is_string()) throw ConfigError(where(path + "." + key, "expected a string"));
    return it->get<std::string>();
}

// 1-based line and column of a byte offset.
inline std::string line_col(const std::string& text, std::size_t byte) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

}  // namespace detail

using CoefficientFactory = std::function<JumpCoefficient(const json& params, const std::string& path)>;

// Named coefficient families; user code registers plugins before loading model files.
class CoefficientRegistry {
public:
    static CoefficientRegistry& instance() {
        static CoefficientRegistry reg;
        return reg;
    }

    void add(const std::string& name, CoefficientFactory f) {
        std::lock_guard<std::mutex> lock(mu_);
        factories_[name] = std::move(f);
    }

    [[nodiscard]] bool contains(const std::string& name) const {
        std::lock_guard<std::mutex> lock(mu_);
        return factories_.count(name) > 0;
    }

    [[nodiscard]] std::vector<std::string> names() const {
        std::lock_guard<std::mutex> lock(mu_);
        std::vector<std::string> out;
        for (const auto& [k, v] : factories_) out.push_back(k);
        return out;
    }

    [[nodiscard]] JumpCoefficient make(const std::string& name, const json& params, const std::string& path) const {
        CoefficientFactory f;
        {
            std::lock_guard<std::mutex> lock(mu_);
            auto it = factories_.find(name);
            if (it == factories_.end()) {
                std::string known;
                for (const auto& [k, v] : factories_) known += (known.empty() ? "" : ", ") + k;
                throw ConfigError(detail::where(path + ".family", "unknown coefficient '" + name + "' (known: " +
                                                                       known + ")"));
            }
            f = it->second;
        }
        return f(params, path + ".params");
    }

private:
    CoefficientRegistry() {
        using detail::number;
        factories_["sigma_sine"] = [](const json& p, const std::string& path) {
            return sigma_sine_coefficient(number(p, "sigma0", path, 2.0), number(p, "amp", path, 0.5),
                                          number(p, "freq", path, 1.0), number(p, "phase", path, 0.0));
        };
        factories_["additive"] = [](const json& p, const std::string& path) {
            return additive_coefficient(number(p, "scale", path, 1.0));
        };
        factories_["zero"] = [](const json&, const std::string&) { return zero_coefficient(); };
        factories_["sine_shear"] = [](const json& p, const std::string& path) {
            return sine_shear_coefficient(number(p, "sigma0", path, 2.0), number(p, "amp", path, 0.5),
                                          number(p, "shear", path, 1.0));
        };
    }

    mutable std::mutex mu_;
    std::map<std::string, CoefficientFactory> factories_;
};

[[nodiscard]] inline LevyMeasure parse_measure(const json& j) {
    const std::string path = "measure";
    const auto family = detail::text(j, "family", path, "truncated_stable");
    if (family == "truncated_stable") {
        const double rho = detail::number(j, "rho", path);
        if (!(rho >= 0.0 && rho < 1.0)) throw ConfigError(detail::where(path + ".rho", "must lie in [0,1)"));
        return LevyMeasure::truncated_stable(rho);
    }
    if (family == "tempered_stable") {
        const double rho = detail::number(j, "rho", path);
        const double lambda = detail::number(j, "lambda", path, 1.0);
        if (!(rho >= 0.0 && rho < 1.0)) throw ConfigError(detail::where(path + ".rho", "must lie in [0,1)"));
        if (!(lambda >= 0.0)) throw ConfigError(detail::where(path + ".lambda", "must be >= 0"));
        return LevyMeasure::from_density(
            [rho, lambda](double z) { return std::pow(z, -1.0 - rho) * std::exp(-lambda * z); }, "tempered_stable");
    }
    throw ConfigError(detail::where(path + ".family", "unknown measure family '" + family + "'"));
}

[[nodiscard]] inline PowerEnvelope parse_envelope(const json& j, const std::string& path, PowerEnvelope fallback) {
    if (j.is_null()) return fallback;
    PowerEnvelope e;
    e.scale = detail::number(j, "scale", path, fallback.scale);
    e.power = detail::number(j, "power", path, fallback.power);
    if (!(e.scale >= 0.0)) throw ConfigError(detail::where(path + ".scale", "must be >= 0"));
    return e;
}

[[nodiscard]] inline Envelopes parse_envelopes(const json& j) {
    Envelopes env;
    if (j.is_null()) return env;
    if (!j.is_object()) throw ConfigError("envelopes: expected an object");
    env.bar = parse_envelope(j.value("bar", json()), "envelopes.bar", env.bar);
    env.under = parse_envelope(j.value("under", json()), "envelopes.under", env.under);
    // c-breve defaults to c-bar.
    env.breve = parse_envelope(j.value("breve", json()), "envelopes.breve", env.bar);
    env.q_star = static_cast<int>(detail::number(j, "q_star", "envelopes", env.q_star));
    if (env.q_star < 0) throw ConfigError("envelopes.q_star: must be >= 0");
    return env;
}

[[nodiscard]] inline SectorSettings parse_sector(const json& j) {
    SectorSettings s;
    if (j.is_null()) return s;
    const std::string path = "sector";
    const auto v = detail::text(j, "variant", path, "strong");
    if (v == "strong")
        s.variant = SectorVariant::strong;
    else if (v == "weak")
        s.variant = SectorVariant::weak;
    else
        throw ConfigError(detail::where(path + ".variant", "expected 'strong' or 'weak'"));
    s.eps_star = detail::number(j, "eps_star", path, s.eps_star);
    s.alpha = detail::number(j, "alpha", path, s.alpha);
    s.alpha1 = detail::number(j, "alpha1", path, s.alpha);
    s.alpha2 = detail::number(j, "alpha2", path, s.alpha2);
    if (!(s.eps_star > 0.0)) throw ConfigError(detail::where(path + ".eps_star", "must be > 0"));
    if (s.variant == SectorVariant::strong && !(s.alpha > 0.0 && s.alpha < 1.0))
        throw ConfigError(detail::where(path + ".alpha", "must lie in (0,1)"));
    return s;
}

[[nodiscard]] inline ModelSpec model_from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("model: expected a JSON object at top level");
    ModelSpec spec;
    spec.source = j;
    spec.model.mu = parse_measure(detail::field(j, "measure", "model"));
    const auto& coef = detail::field(j, "coefficient", "model");
    const auto family = detail::text(coef, "family", "coefficient", "");
    if (family.empty()) throw ConfigError("coefficient.family: missing required field");
    spec.model.c = CoefficientRegistry::instance().make(family, coef.value("params", json::object()), "coefficient");
    spec.model.env = parse_envelopes(j.value("envelopes", json()));
    spec.sector = parse_sector(j.value("sector", json()));
    return spec;
}

[[nodiscard]] inline ModelSpec parse_model(const std::string& text, const std::string& origin = "<model>") {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(origin + ": " + detail::line_col(text, e.byte == 0 ? 0 : e.byte - 1) + ": " +
                          e.what());
    }
    try {
        return model_from_json(j);
    } catch (const ConfigError& e) {
        throw ConfigError(origin + ": " + e.what());
    } catch (const json::exception& e) {
        throw ConfigError(origin + ": " + e.what());
    }
}

[[nodiscard]] inline ModelSpec load_model(const std::string& path) { return parse_model(read_file(path), path); }

[[nodiscard]] inline json worked_example_json(double rho = 0.5) {
    return json{{"measure", {{"family", "truncated_stable"}, {"rho", rho}}},
                {"coefficient", {{"family", "sigma_sine"}, {"params", {{"sigma0", 2.0}, {"amp", 0.5}, {"freq", 1.0}}}}},
                {"envelopes",
                 {{"bar", {{"scale", 2.5}, {"power", 1.0}}},
                  {"under", {{"scale", 2.25}, {"power", 4.0}}},
                  {"breve", {{"scale", 2.5}, {"power", 1.0}}},
                  {"q_star", 1}}},
                {"sector", {{"variant", "strong"}, {"eps_star", 0.5}, {"alpha", 0.75}, {"alpha1", 0.75}, {"alpha2", 0.5}}}};
}

}  // namespace smalljump::io
