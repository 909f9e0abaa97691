#include <hopforge/json_schema.hpp>

namespace hopforge {

using nlohmann::json;

namespace {

bool type_matches(const json& v, const std::string& type) {
    if (type == "object") return v.is_object();
    if (type == "array") return v.is_array();
    if (type == "string") return v.is_string();
    if (type == "integer") return v.is_number_integer();
    if (type == "number") return v.is_number();
    if (type == "boolean") return v.is_boolean();
    if (type == "null") return v.is_null();
    return false;
}

std::optional<std::string> check(const json& v, const json& schema, const std::string& path) {
    if (!schema.is_object()) return std::nullopt;

    if (auto t = schema.find("type"); t != schema.end()) {
        bool ok = false;
        if (t->is_string()) {
            ok = type_matches(v, t->get<std::string>());
        } else if (t->is_array()) {
            for (const auto& alt : *t) ok = ok || (alt.is_string() && type_matches(v, alt.get<std::string>()));
        }
        if (!ok) return path + ": expected type " + t->dump();
    }
    if (auto e = schema.find("enum"); e != schema.end() && e->is_array()) {
        bool found = false;
        for (const auto& option : *e) found = found || option == v;
        if (!found) return path + ": value " + v.dump() + " not in enum";
    }
    if (v.is_string()) {
        if (auto m = schema.find("minLength"); m != schema.end() && v.get_ref<const std::string&>().size() < m->get<std::size_t>()) {
            return path + ": string shorter than " + m->dump();
        }
    }
    if (v.is_number()) {
        const double x = v.get<double>();
        if (auto m = schema.find("minimum"); m != schema.end() && x < m->get<double>()) {
            return path + ": below minimum " + m->dump();
        }
        if (auto m = schema.find("maximum"); m != schema.end() && x > m->get<double>()) {
            return path + ": above maximum " + m->dump();
        }
    }
    if (v.is_object()) {
        if (auto r = schema.find("required"); r != schema.end()) {
            for (const auto& key : *r) {
                if (!v.contains(key.get<std::string>())) return path + ": missing required '" + key.get<std::string>() + "'";
            }
        }
        const auto props = schema.find("properties");
        for (const auto& [key, child] : v.items()) {
            if (props != schema.end() && props->contains(key)) {
                if (auto err = check(child, (*props)[key], path + "." + key)) return err;
            } else if (auto ap = schema.find("additionalProperties"); ap != schema.end() && ap->is_boolean() && !ap->get<bool>()) {
                return path + ": unexpected property '" + key + "'";
            }
        }
    }
    if (v.is_array()) {
        if (auto m = schema.find("minItems"); m != schema.end() && v.size() < m->get<std::size_t>()) {
            return path + ": fewer than " + m->dump() + " items";
        }
        if (auto m = schema.find("maxItems"); m != schema.end() && v.size() > m->get<std::size_t>()) {
            return path + ": more than " + m->dump() + " items";
        }
        if (auto items = schema.find("items"); items != schema.end()) {
            for (std::size_t i = 0; i < v.size(); ++i) {
                if (auto err = check(v[i], *items, path + "[" + std::to_string(i) + "]")) return err;
            }
        }
    }
    return std::nullopt;
}

}  // namespace

std::optional<std::string> schema_violation(const json& value, const json& schema) {
    return check(value, schema, "$");
}

}  // namespace hopforge
