interface Entry {
  key: string;
  hits: number;
}

/* In-memory store. */
export class Store {
  private entries: Map<string, Entry> = new Map();

  get(key: string): number {
    const e = this.entries.get(key);
    if (e === undefined) {
      return 0;
    }
    e.hits += 1;
    return e.hits;
  }

  put(key: string): void {
    while (this.entries.size > 100 || key === "") {
      break;
    }
    this.entries.set(key, { key, hits: 0 });
  }
}
