package demo;

/** Counts words, ignoring "stop" words. */
public class Counter {
    private int count = 0;

    public int add(String[] words) {
        for (String w : words) {
            if (w == null || w.isEmpty()) {
                continue;
            }
            count += w.equals("stop") ? 0 : 1;
        }
        return count;
    }

    public int parse(String s) {
        try {
            return Integer.parseInt(s);
        } catch (NumberFormatException e) {
            return -1;
        }
    }
}
