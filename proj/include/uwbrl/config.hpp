#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "uwbrl/agent.hpp"
#include "uwbrl/simulator.hpp"

namespace uwbrl {

using Json = nlohmann::ordered_json;

// Reads only the keys present in a JSON object into an already-defaulted
// struct; unknown keys and type mismatches raise ConfigError.
class JsonFields {
public:
    JsonFields(const Json& j, std::string context);

    template <class T>
    void get(const char* key, T& out) {
        if (!j_.contains(key)) return;
        seen_.push_back(key);
        try {
            j_.at(key).get_to(out);
        } catch (const std::exception& e) {
            fail(std::string("bad value for '") + key + "': " + e.what());
        }
    }
    void finish() const;

    const Json& json() const { return j_; }
    [[noreturn]] void fail(const std::string& what) const;

private:
    const Json& j_;
    std::string context_;
    std::vector<std::string> seen_;
};

}  // namespace uwbrl

// Struct <-> JSON converters for nlohmann (found via ADL).
namespace uwbrl {
void to_json(Json& j, const Rect& r);
void from_json(const Json& j, Rect& r);
void to_json(Json& j, const Anchor& a);
void from_json(const Json& j, Anchor& a);
void to_json(Json& j, const NlosErrorModel& m);
void from_json(const Json& j, NlosErrorModel& m);
void to_json(Json& j, const ChannelModel& m);
void from_json(const Json& j, ChannelModel& m);
void to_json(Json& j, const Environment& e);
void from_json(const Json& j, Environment& e);
void to_json(Json& j, const TrajectoryPlan& p);
void from_json(const Json& j, TrajectoryPlan& p);
void to_json(Json& j, const EkfConfig& c);
void from_json(const Json& j, EkfConfig& c);
void to_json(Json& j, const AgentConfig& c);
void from_json(const Json& j, AgentConfig& c);
namespace nn {
void to_json(Json& j, const NetworkShape& s);
void from_json(const Json& j, NetworkShape& s);
}  // namespace nn
}  // namespace uwbrl

namespace nlohmann {
template <>
struct adl_serializer<uwbrl::Vec2> {
    template <class J>
    static void to_json(J& j, const uwbrl::Vec2& v) {
        j = J::array({v.x(), v.y()});
    }
    template <class J>
    static void from_json(const J& j, uwbrl::Vec2& v) {
        if (!j.is_array() || j.size() != 2) throw std::invalid_argument("expected [x, y]");
        v = uwbrl::Vec2(j[0].template get<double>(), j[1].template get<double>());
    }
};
template <>
struct adl_serializer<uwbrl::Vec3> {
    template <class J>
    static void to_json(J& j, const uwbrl::Vec3& v) {
        j = J::array({v.x(), v.y(), v.z()});
    }
    template <class J>
    static void from_json(const J& j, uwbrl::Vec3& v) {
        if (!j.is_array() || j.size() != 3) throw std::invalid_argument("expected [x, y, z]");
        v = uwbrl::Vec3(j[0].template get<double>(), j[1].template get<double>(), j[2].template get<double>());
    }
};
}  // namespace nlohmann
