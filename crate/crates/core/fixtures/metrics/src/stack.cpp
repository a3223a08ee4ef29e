#include <stdexcept>
#include <vector>

// Bounded stack.
class Stack {
public:
    explicit Stack(std::size_t cap) : cap_(cap) {}

    void push(int v) {
        if (items_.size() >= cap_) {
            throw std::overflow_error("full");
        }
        items_.push_back(v);
    }

    int pop_or(int fallback) {
        try {
            if (items_.empty()) throw std::underflow_error("empty");
            int v = items_.back();
            items_.pop_back();
            return v;
        } catch (const std::underflow_error &) {
            return fallback;
        }
    }

private:
    std::size_t cap_;
    std::vector<int> items_;
};
