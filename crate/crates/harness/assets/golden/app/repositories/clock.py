def next_tick(db):
    db.execute("UPDATE clock SET tick = tick + 1 WHERE id = 1")
    return db.execute("SELECT tick FROM clock WHERE id = 1").fetchone()["tick"]
