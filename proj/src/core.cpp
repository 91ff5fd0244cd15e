#include "mfs/core.hpp"

#include <cstdlib>

namespace mfs {

LogLevel log_level() {
    static const LogLevel level = [] {
        const char* env = std::getenv("MULTIFID_LOG");
        if (!env) return LogLevel::Warn;
        const std::string v(env);
        if (v == "error") return LogLevel::Error;
        if (v == "warn") return LogLevel::Warn;
        if (v == "info") return LogLevel::Info;
        if (v == "debug") return LogLevel::Debug;
        return LogLevel::Warn;
    }();
    return level;
}

void log(LogLevel level, const std::string& msg) {
    if (level > log_level()) return;
    static const char* names[] = {"error", "warn", "info", "debug"};
    std::fprintf(stderr, "[multifid:%s] %s\n", names[static_cast<int>(level)], msg.c_str());
}

int StateLayout::add(const std::string& owner, const std::string& name, bool differential) {
    const auto key = std::make_pair(owner, name);
    if (index_.count(key))
        throw ConfigError("duplicate state in layout: " + owner + "." + name);
    if (!differential) {
        const int idx = size();
        entries_.push_back({owner, name, false});
        index_[key] = idx;
        return idx;
    }
    if (algebraic_count() != 0)
        throw ConfigError("differential state added after algebraic states: " + owner + "." + name);
    const int idx = n_diff_++;
    entries_.push_back({owner, name, true});
    index_[key] = idx;
    return idx;
}

int StateLayout::add_differential(const std::string& owner, const std::string& name) {
    return add(owner, name, true);
}

int StateLayout::add_algebraic(const std::string& owner, const std::string& name) {
    return add(owner, name, false);
}

int StateLayout::index_of(const std::string& owner, const std::string& name) const {
    const auto it = index_.find(std::make_pair(owner, name));
    if (it == index_.end())
        throw ConfigError("unknown state: " + owner + "." + name);
    return it->second;
}

bool StateLayout::contains(const std::string& owner, const std::string& name) const {
    return index_.count(std::make_pair(owner, name)) > 0;
}

std::string StateLayout::qualified_name(int index) const {
    const Entry& e = entry(index);
    return e.owner + "." + e.name;
}

bool StateLayout::operator==(const StateLayout& o) const {
    if (n_diff_ != o.n_diff_ || entries_.size() != o.entries_.size()) return false;
    for (size_t i = 0; i < entries_.size(); ++i) {
        if (entries_[i].owner != o.entries_[i].owner || entries_[i].name != o.entries_[i].name ||
            entries_[i].differential != o.entries_[i].differential)
            return false;
    }
    return true;
}

}  // namespace mfs
