// Formatting helpers.
export function label(user) {
  const name = user?.name ?? 'anonymous';
  return `user: ${name}`;
}

export function pick(items, pred) {
  const out = [];
  for (const item of items) {
    if (pred(item) && item !== null) {
      out.push(item);
    }
  }
  return out.length > 0 ? out : null;
}
