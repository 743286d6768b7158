#include "kgconv/pylist.h"

#include "kgconv/common.h"

namespace kgconv {

namespace {

class Reader {
public:
    Reader(std::string_view text, std::size_t pos) : text_(text), pos_(pos) {}

    std::optional<PyList> list() {
        PyList out;
        out.begin = pos_;
        if (!eat('[')) return std::nullopt;
        skip_ws();
        if (eat(']')) {
            out.end = pos_;
            return out;
        }
        while (true) {
            auto item = element();
            if (!item) return std::nullopt;
            out.items.push_back(std::move(*item));
            skip_ws();
            if (eat(']')) break;
            if (!eat(',')) return std::nullopt;
            skip_ws();
            if (eat(']')) break;  // trailing comma
        }
        out.end = pos_;
        return out;
    }

private:
    std::optional<PyListItem> element() {
        skip_ws();
        PyListItem item;
        if (eat('(')) {
            item.tuple = true;
            skip_ws();
            if (eat(')')) return item;
            while (true) {
                bool quoted = false;
                auto part = scalar(quoted);
                if (!part) return std::nullopt;
                if (item.parts.empty()) item.quoted = quoted;
                item.parts.push_back(std::move(*part));
                skip_ws();
                if (eat(')')) break;
                if (!eat(',')) return std::nullopt;
                skip_ws();
                if (eat(')')) break;
            }
            return item;
        }
        bool quoted = false;
        auto part = scalar(quoted);
        if (!part) return std::nullopt;
        item.quoted = quoted;
        item.parts.push_back(std::move(*part));
        return item;
    }

    std::optional<std::string> scalar(bool& quoted) {
        skip_ws();
        if (pos_ >= text_.size()) return std::nullopt;
        const char c = text_[pos_];
        if (c == '\'' || c == '"') {
            quoted = true;
            return quoted_string(c);
        }
        quoted = false;
        std::size_t start = pos_;
        while (pos_ < text_.size()) {
            const char d = text_[pos_];
            if (d == ',' || d == ']' || d == ')' || d == '[' || d == '(' || d == '\'' || d == '"' ||
                d == '\n')
                break;
            ++pos_;
        }
        std::string token = trim(text_.substr(start, pos_ - start));
        if (token.empty()) return std::nullopt;
        return token;
    }

    std::optional<std::string> quoted_string(char quote) {
        ++pos_;
        std::string out;
        while (pos_ < text_.size()) {
            const char c = text_[pos_++];
            if (c == quote) return out;
            if (c == '\\' && pos_ < text_.size()) {
                const char e = text_[pos_++];
                switch (e) {
                    case 'n': out.push_back('\n'); break;
                    case 't': out.push_back('\t'); break;
                    default: out.push_back(e); break;
                }
                continue;
            }
            out.push_back(c);
        }
        return std::nullopt;
    }

    void skip_ws() {
        while (pos_ < text_.size() &&
               (text_[pos_] == ' ' || text_[pos_] == '\t' || text_[pos_] == '\n' || text_[pos_] == '\r'))
            ++pos_;
    }

    bool eat(char c) {
        if (pos_ < text_.size() && text_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    std::string_view text_;
    std::size_t pos_;
};

}  // namespace

std::optional<PyList> parse_python_list_at(std::string_view text, std::size_t pos) {
    if (pos >= text.size() || text[pos] != '[') return std::nullopt;
    return Reader(text, pos).list();
}

std::optional<PyList> find_python_list(std::string_view text, std::size_t from) {
    for (std::size_t pos = text.find('[', from); pos != std::string_view::npos;
         pos = text.find('[', pos + 1)) {
        if (auto parsed = parse_python_list_at(text, pos)) return parsed;
    }
    return std::nullopt;
}

std::string python_quote(std::string_view s) {
    const bool has_single = s.find('\'') != std::string_view::npos;
    const bool has_double = s.find('"') != std::string_view::npos;
    const char quote = (has_single && !has_double) ? '"' : '\'';
    std::string out(1, quote);
    for (char c : s) {
        if (c == '\\' || c == quote) out.push_back('\\');
        if (c == '\n') {
            out += "\\n";
            continue;
        }
        out.push_back(c);
    }
    out.push_back(quote);
    return out;
}

}  // namespace kgconv
